#pragma once

// Base station load arithmetic and the linear (EARTH-style) power model.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cellsleep::power {

enum class BsClass : std::uint8_t { Macro, Rrh, Micro, Pico, Femto };

inline constexpr std::size_t kNumBsClasses = 5;
inline constexpr std::array<BsClass, kNumBsClasses> kAllBsClasses = {
    BsClass::Macro, BsClass::Rrh, BsClass::Micro, BsClass::Pico, BsClass::Femto};

std::string_view to_string(BsClass c);
/// Accepts "macro", "rrh", "micro", "pico", "femto" (case-insensitive).
BsClass parse_bs_class(std::string_view name);

constexpr std::size_t index_of(BsClass c) { return static_cast<std::size_t>(c); }

/// Per-class power constants. All powers in watts.
struct PowerProfile {
  double p_fixed = 0.0;   // consumption at zero load while on
  double amp_eff = 0.0;   // load-dependent slope factor
  double p_tx_max = 0.0;  // fixed transmit power
  double p_sleep = 0.0;   // consumption while switched off
  double bandwidth_mhz = 0.0;

  /// Throws ValidationError unless every field is positive and p_sleep < p_fixed.
  void validate() const;

  friend bool operator==(const PowerProfile&, const PowerProfile&) = default;
};

/// Built-in constants for each class.
PowerProfile default_profile(BsClass c);

/// One PowerProfile per BsClass.
class ProfileTable {
 public:
  ProfileTable();  // the built-in defaults
  explicit ProfileTable(const std::array<PowerProfile, kNumBsClasses>& profiles);

  const PowerProfile& operator[](BsClass c) const { return profiles_[index_of(c)]; }
  void set(BsClass c, const PowerProfile& p);

 private:
  std::array<PowerProfile, kNumBsClasses> profiles_;
};

/// Normalized resource usage of a base station, always within [0, 1].
class LoadFraction {
 public:
  LoadFraction() = default;
  /// Throws DomainError when value is outside [0, 1] or not finite.
  explicit LoadFraction(double value);

  double value() const noexcept { return value_; }

  friend auto operator<=>(const LoadFraction&, const LoadFraction&) = default;

 private:
  double value_ = 0.0;
};

/// Resource-block bookkeeping of one base station.
struct RbDemand {
  std::int64_t rb_count = 0;
  std::int64_t total_rbs = 1;
  std::int64_t users = 0;
};

/// Achievable rate in bits/s of a user holding `rb_assigned` blocks.
double user_rate(std::int64_t rb_assigned, double rb_bandwidth_hz, double sinr);

/// Smallest integral number of blocks delivering at least `min_rate_bps`.
std::int64_t required_rbs(double min_rate_bps, double rb_bandwidth_hz, double sinr);

/// Sum of per-user block demands over the base station's block budget.
/// Throws OverloadError when demand exceeds `total_rbs`.
LoadFraction bs_load(std::span<const std::int64_t> demands, std::int64_t total_rbs);
LoadFraction bs_load(const RbDemand& demand);

/// p_fixed + load * amp_eff * p_tx_max when on, p_sleep when off.
/// Throws DomainError for an on-state load outside [0, 1].
double instantaneous_power(const PowerProfile& profile, double load, bool is_on);

/// Binary on/off assignment over the base stations of one macro cell.
/// Index 0 is the macro base station and is always on.
class SwitchVector {
 public:
  SwitchVector() = default;
  /// Throws ValidationError when bits is empty, bits[0] != 1 or a bit is not 0/1.
  explicit SwitchVector(std::vector<std::uint8_t> bits);

  static SwitchVector all_on(std::size_t num_bs);
  /// Builds from the SBS bits only (MBS prepended as on).
  static SwitchVector from_sbs_bits(std::span<const std::uint8_t> sbs_bits);

  std::size_t size() const noexcept { return bits_.size(); }
  bool is_on(std::size_t j) const { return bits_.at(j) != 0; }
  void set(std::size_t j, bool on);
  std::size_t num_off() const;
  std::size_t num_active_sbs() const { return size() - 1 - num_off(); }
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }
  /// "1011..." with one character per BS.
  std::string to_string() const;

  friend bool operator==(const SwitchVector&, const SwitchVector&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Loads and switch state of one slot after offloading has been applied.
struct NetworkSnapshot {
  std::vector<double> raw_loads;  // per BS, before offloading
  SwitchVector switch_state;
  double effective_mbs_load = 0.0;  // macro load after absorbing off SBSs
};

/// Sum over BSs of on-power (at post-offload load) or sleep power.
/// `per_bs_profiles` is aligned with `snapshot.raw_loads`.
double total_network_power(const NetworkSnapshot& snapshot,
                           std::span<const PowerProfile> per_bs_profiles);

}  // namespace cellsleep::power
