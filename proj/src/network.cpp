#include "cellsleep/network.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cellsleep/errors.hpp"

namespace cellsleep::net {

std::string_view to_string(OffloadScaling s) {
  return s == OffloadScaling::BandwidthScaled ? "bandwidth_scaled" : "literal";
}

OffloadScaling parse_offload_scaling(std::string_view name) {
  if (name == "bandwidth_scaled") return OffloadScaling::BandwidthScaled;
  if (name == "literal") return OffloadScaling::Literal;
  throw ValidationError("unknown offload scaling '" + std::string(name) + "'");
}

void MacroCellConfig::validate() const {
  if (!(mbs_capacity_limit > 0.0 && mbs_capacity_limit <= 1.0)) {
    throw ValidationError("mbs_capacity_limit must lie in (0, 1]");
  }
  for (BsClass c : sbs_classes) {
    if (c == BsClass::Macro) throw ValidationError("a macro cell holds exactly one macro BS");
  }
}

std::vector<PowerProfile> per_bs_profiles(const MacroCellConfig& cfg,
                                          const ProfileTable& profiles) {
  std::vector<PowerProfile> out;
  out.reserve(cfg.num_bs());
  for (std::size_t j = 0; j < cfg.num_bs(); ++j) out.push_back(profiles[cfg.class_of(j)]);
  return out;
}

double offload_factor(std::size_t j, const MacroCellConfig& cfg, const ProfileTable& profiles) {
  if (cfg.offload_scaling == OffloadScaling::Literal) return 1.0;
  return profiles[cfg.class_of(j)].bandwidth_mhz / profiles[BsClass::Macro].bandwidth_mhz;
}

namespace {

void check_shapes(std::span<const double> loads, const SwitchVector& gamma,
                  const MacroCellConfig& cfg) {
  if (loads.size() != cfg.num_bs() || gamma.size() != cfg.num_bs()) {
    throw ShapeError("expected " + std::to_string(cfg.num_bs()) + " loads and switch bits, got " +
                     std::to_string(loads.size()) + " and " + std::to_string(gamma.size()));
  }
}

}  // namespace

double offloaded_mbs_load(std::span<const double> loads, const SwitchVector& gamma,
                          const MacroCellConfig& cfg, const ProfileTable& profiles) {
  check_shapes(loads, gamma, cfg);
  double load = loads[0];
  for (std::size_t j = 1; j < loads.size(); ++j) {
    if (!gamma.is_on(j)) load += loads[j] * offload_factor(j, cfg, profiles);
  }
  return load;
}

bool qos_feasible(double effective_mbs_load, const MacroCellConfig& cfg) {
  return effective_mbs_load <= cfg.mbs_capacity_limit;
}

NetworkSnapshot make_snapshot(std::span<const double> loads, const SwitchVector& gamma,
                              const MacroCellConfig& cfg, const ProfileTable& profiles) {
  NetworkSnapshot snap;
  snap.raw_loads.assign(loads.begin(), loads.end());
  snap.switch_state = gamma;
  snap.effective_mbs_load = offloaded_mbs_load(loads, gamma, cfg, profiles);
  return snap;
}

double network_power(std::span<const double> loads, const SwitchVector& gamma,
                     const MacroCellConfig& cfg, const ProfileTable& profiles) {
  check_shapes(loads, gamma, cfg);
  // Inlined form of total_network_power over per_bs_profiles; this sits in
  // the inner loop of exhaustive search and agent training.
  const double mbs = offloaded_mbs_load(loads, gamma, cfg, profiles);
  double total = power::instantaneous_power(profiles[BsClass::Macro], mbs, true);
  for (std::size_t j = 1; j < loads.size(); ++j) {
    total += power::instantaneous_power(profiles[cfg.class_of(j)], loads[j], gamma.is_on(j));
  }
  return total;
}

double power_saved(std::span<const double> loads, const SwitchVector& gamma,
                   const ProfileTable& profiles, const MacroCellConfig& cfg) {
  const double all_on = network_power(loads, SwitchVector::all_on(cfg.num_bs()), cfg, profiles);
  return all_on - network_power(loads, gamma, cfg, profiles);
}

double energy_over_horizon(std::span<const double> per_slot_power_w, double slot_minutes) {
  if (!(slot_minutes > 0.0)) throw DomainError("slot duration must be positive");
  double joules = 0.0;
  for (double p : per_slot_power_w) joules += p * slot_minutes * 60.0;
  return joules;
}

double energy_saved(double all_on_energy_j, double method_energy_j) {
  if (all_on_energy_j < 0.0 || method_energy_j < 0.0) {
    throw DomainError("energies must be non-negative");
  }
  return all_on_energy_j - method_energy_j;
}

double coverage_loss(double traffic_before, double traffic_after) {
  if (!(traffic_before > 0.0)) {
    throw DomainError("coverage_loss is undefined for zero prior traffic");
  }
  return (traffic_before - traffic_after) / traffic_before * 100.0;
}

double total_demand(std::span<const double> loads, const MacroCellConfig& cfg,
                    const ProfileTable& profiles) {
  if (loads.size() != cfg.num_bs()) throw ShapeError("total_demand: wrong number of loads");
  double total = loads[0];
  for (std::size_t j = 1; j < loads.size(); ++j) total += loads[j] * offload_factor(j, cfg, profiles);
  return total;
}

double served_traffic(std::span<const double> loads, const SwitchVector& gamma,
                      const MacroCellConfig& cfg, const ProfileTable& profiles) {
  const double mbs = offloaded_mbs_load(loads, gamma, cfg, profiles);
  const double served = total_demand(loads, cfg, profiles) - std::max(0.0, mbs - cfg.mbs_capacity_limit);
  return served;
}

}  // namespace cellsleep::net
