#pragma once

// Macro-cell topology, vertical offloading, QoS feasibility and energy metrics.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "cellsleep/power_model.hpp"

namespace cellsleep::net {

using power::BsClass;
using power::NetworkSnapshot;
using power::PowerProfile;
using power::ProfileTable;
using power::SwitchVector;

/// How an off SBS's load is converted into macro load.
enum class OffloadScaling {
  BandwidthScaled,  // psi_sbs * B_sbs / B_mbs
  Literal,          // psi_sbs added as-is
};

std::string_view to_string(OffloadScaling s);
OffloadScaling parse_offload_scaling(std::string_view name);

/// One macro cell: the MBS (index 0) plus its small base stations (1..N).
struct MacroCellConfig {
  std::vector<BsClass> sbs_classes;
  double mbs_capacity_limit = 1.0;
  OffloadScaling offload_scaling = OffloadScaling::BandwidthScaled;

  std::size_t num_bs() const { return 1 + sbs_classes.size(); }
  std::size_t num_sbs() const { return sbs_classes.size(); }
  /// Class of BS j, where j = 0 is the macro.
  BsClass class_of(std::size_t j) const { return j == 0 ? BsClass::Macro : sbs_classes.at(j - 1); }
  /// Throws ValidationError when the limit is outside (0, 1] or an SBS is a macro.
  void validate() const;
};

/// Profiles laid out per BS, in BS index order.
std::vector<PowerProfile> per_bs_profiles(const MacroCellConfig& cfg, const ProfileTable& profiles);

/// Factor applied to SBS j's load when it is absorbed by the macro.
double offload_factor(std::size_t j, const MacroCellConfig& cfg, const ProfileTable& profiles);

/// Macro load after absorbing every off SBS. `loads` holds one value per BS
/// (index 0 = MBS). The result is not clamped and may exceed 1.
double offloaded_mbs_load(std::span<const double> loads, const SwitchVector& gamma,
                          const MacroCellConfig& cfg, const ProfileTable& profiles);

/// Inclusive check of the macro capacity constraint.
bool qos_feasible(double effective_mbs_load, const MacroCellConfig& cfg);

NetworkSnapshot make_snapshot(std::span<const double> loads, const SwitchVector& gamma,
                              const MacroCellConfig& cfg, const ProfileTable& profiles);

/// Network power for the given switch state, after offloading.
/// Throws DomainError if the offloaded macro load exceeds 1.
double network_power(std::span<const double> loads, const SwitchVector& gamma,
                     const MacroCellConfig& cfg, const ProfileTable& profiles);

/// All-on power minus power under `gamma`. Negative when switching costs energy.
double power_saved(std::span<const double> loads, const SwitchVector& gamma,
                   const ProfileTable& profiles, const MacroCellConfig& cfg);

/// Joules consumed by a per-slot power series of slots lasting `slot_minutes`.
double energy_over_horizon(std::span<const double> per_slot_power_w, double slot_minutes);

double energy_saved(double all_on_energy_j, double method_energy_j);

/// Percentage of traffic lost: (before - after) / before * 100.
double coverage_loss(double traffic_before, double traffic_after);

/// Total traffic demand of the cell, in the unit in which offloading is
/// accounted (macro-bandwidth-equivalent loads for BandwidthScaled).
double total_demand(std::span<const double> loads, const MacroCellConfig& cfg,
                    const ProfileTable& profiles);

/// Traffic actually carried under `gamma`; the macro carries at most its limit.
double served_traffic(std::span<const double> loads, const SwitchVector& gamma,
                      const MacroCellConfig& cfg, const ProfileTable& profiles);

}  // namespace cellsleep::net
