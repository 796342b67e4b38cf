#include "cellsleep/power_model.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "cellsleep/errors.hpp"

namespace cellsleep::power {

namespace {

// Fixed / slope / transmit / sleep / bandwidth, one row per class.
constexpr std::array<PowerProfile, kNumBsClasses> kDefaults = {{
    {130.0, 4.7, 20.0, 75.0, 20.0},  // Macro
    {84.0, 2.8, 20.0, 56.0, 15.0},   // RRH
    {56.0, 2.6, 6.3, 39.0, 10.0},    // Micro
    {6.8, 4.0, 0.13, 4.3, 5.0},      // Pico
    {4.8, 8.0, 0.05, 2.9, 3.0},      // Femto
}};

}  // namespace

std::string_view to_string(BsClass c) {
  switch (c) {
    case BsClass::Macro: return "macro";
    case BsClass::Rrh: return "rrh";
    case BsClass::Micro: return "micro";
    case BsClass::Pico: return "pico";
    case BsClass::Femto: return "femto";
  }
  return "unknown";
}

BsClass parse_bs_class(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  for (BsClass c : kAllBsClasses) {
    if (to_string(c) == lower) return c;
  }
  throw ValidationError("unknown base station class '" + std::string(name) + "'");
}

void PowerProfile::validate() const {
  if (!(p_fixed > 0.0 && amp_eff > 0.0 && p_tx_max > 0.0 && p_sleep > 0.0 &&
        bandwidth_mhz > 0.0)) {
    throw ValidationError("power profile fields must all be positive");
  }
  if (!(p_sleep < p_fixed)) {
    throw ValidationError("sleep power must be below fixed power");
  }
}

PowerProfile default_profile(BsClass c) { return kDefaults[index_of(c)]; }

ProfileTable::ProfileTable() : profiles_(kDefaults) {}

ProfileTable::ProfileTable(const std::array<PowerProfile, kNumBsClasses>& profiles)
    : profiles_(profiles) {
  for (const auto& p : profiles_) p.validate();
}

void ProfileTable::set(BsClass c, const PowerProfile& p) {
  p.validate();
  profiles_[index_of(c)] = p;
}

LoadFraction::LoadFraction(double value) : value_(value) {
  if (!std::isfinite(value) || value < 0.0 || value > 1.0) {
    throw DomainError("load fraction " + std::to_string(value) + " outside [0, 1]");
  }
}

double user_rate(std::int64_t rb_assigned, double rb_bandwidth_hz, double sinr) {
  if (rb_assigned < 0 || !(rb_bandwidth_hz > 0.0) || !(sinr >= 0.0)) {
    throw DomainError("user_rate: inputs must be non-negative with positive bandwidth");
  }
  return static_cast<double>(rb_assigned) * rb_bandwidth_hz * std::log2(1.0 + sinr);
}

std::int64_t required_rbs(double min_rate_bps, double rb_bandwidth_hz, double sinr) {
  if (!(min_rate_bps >= 0.0) || !(rb_bandwidth_hz > 0.0)) {
    throw DomainError("required_rbs: rate must be >= 0 and bandwidth > 0");
  }
  if (!(sinr > 0.0)) {
    throw InfeasibleUserError("required_rbs: user with zero SINR cannot be served");
  }
  const double ratio = min_rate_bps / (rb_bandwidth_hz * std::log2(1.0 + sinr));
  return static_cast<std::int64_t>(std::ceil(ratio));
}

LoadFraction bs_load(std::span<const std::int64_t> demands, std::int64_t total_rbs) {
  if (total_rbs < 1) throw DomainError("bs_load: total_rbs must be >= 1");
  std::int64_t sum = 0;
  for (std::int64_t d : demands) {
    if (d < 0) throw DomainError("bs_load: negative block demand");
    sum += d;
  }
  if (sum > total_rbs) {
    throw OverloadError("bs_load: demand of " + std::to_string(sum) + " blocks exceeds " +
                        std::to_string(total_rbs));
  }
  return LoadFraction(static_cast<double>(sum) / static_cast<double>(total_rbs));
}

LoadFraction bs_load(const RbDemand& demand) {
  const std::int64_t d = demand.rb_count;
  return bs_load(std::span<const std::int64_t>(&d, 1), demand.total_rbs);
}

double instantaneous_power(const PowerProfile& profile, double load, bool is_on) {
  if (!is_on) return profile.p_sleep;
  if (!std::isfinite(load) || load < 0.0 || load > 1.0) {
    throw DomainError("instantaneous_power: on-state load " + std::to_string(load) +
                      " outside [0, 1]");
  }
  return profile.p_fixed + load * profile.amp_eff * profile.p_tx_max;
}

SwitchVector::SwitchVector(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  if (bits_.empty()) throw ValidationError("switch vector must hold the macro BS");
  if (bits_[0] != 1) throw ValidationError("macro BS must always be on");
  for (auto b : bits_) {
    if (b > 1) throw ValidationError("switch bits must be 0 or 1");
  }
}

SwitchVector SwitchVector::all_on(std::size_t num_bs) {
  return SwitchVector(std::vector<std::uint8_t>(num_bs, 1));
}

SwitchVector SwitchVector::from_sbs_bits(std::span<const std::uint8_t> sbs_bits) {
  std::vector<std::uint8_t> bits;
  bits.reserve(sbs_bits.size() + 1);
  bits.push_back(1);
  bits.insert(bits.end(), sbs_bits.begin(), sbs_bits.end());
  return SwitchVector(std::move(bits));
}

void SwitchVector::set(std::size_t j, bool on) {
  if (j == 0 && !on) throw ValidationError("macro BS must always be on");
  bits_.at(j) = on ? 1 : 0;
}

std::size_t SwitchVector::num_off() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{0}));
}

std::string SwitchVector::to_string() const {
  std::string s;
  s.reserve(bits_.size());
  for (auto b : bits_) s.push_back(b ? '1' : '0');
  return s;
}

double total_network_power(const NetworkSnapshot& snapshot,
                           std::span<const PowerProfile> per_bs_profiles) {
  const std::size_t n = snapshot.raw_loads.size();
  if (per_bs_profiles.size() != n || snapshot.switch_state.size() != n || n == 0) {
    throw ShapeError("total_network_power: loads, profiles and switch vector differ in length");
  }
  double total = instantaneous_power(per_bs_profiles[0], snapshot.effective_mbs_load, true);
  for (std::size_t j = 1; j < n; ++j) {
    total += instantaneous_power(per_bs_profiles[j], snapshot.raw_loads[j],
                                 snapshot.switch_state.is_on(j));
  }
  return total;
}

}  // namespace cellsleep::power
