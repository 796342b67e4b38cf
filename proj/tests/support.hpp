#pragma once

// Independent oracles and random instance generators shared by the unit and
// acceptance tests. Nothing here calls into the code under test except the
// profile table.

#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "cellsleep/network.hpp"

namespace support {

using cellsleep::power::BsClass;

struct Instance {
  cellsleep::net::MacroCellConfig cfg;
  std::vector<double> loads;  // index 0 = MBS
};

/// Random cell with 1..max_sbs SBSs of random classes and loads.
inline Instance random_instance(std::mt19937_64& rng, std::size_t max_sbs) {
  std::uniform_int_distribution<std::size_t> n_dist(1, max_sbs);
  std::uniform_int_distribution<int> cls(1, 4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Instance in;
  const std::size_t n = n_dist(rng);
  for (std::size_t j = 0; j < n; ++j) in.cfg.sbs_classes.push_back(static_cast<BsClass>(cls(rng)));
  in.loads.push_back(0.9 * u(rng));
  for (std::size_t j = 0; j < n; ++j) in.loads.push_back(u(rng));
  return in;
}

/// Hand-written EARTH evaluation of one BS.
inline double earth(const cellsleep::power::PowerProfile& p, double load, bool on) {
  return on ? p.p_fixed + load * p.amp_eff * p.p_tx_max : p.p_sleep;
}

struct OracleResult {
  std::uint64_t off_mask = 0;  // bit j-1 set when SBS j is off
  double power = std::numeric_limits<double>::infinity();
};

/// Brute force over all switch vectors, written independently of the
/// library. Floating-point operations are associated the same way as in
/// the library (offload factor B_j / B_mbs first, MBS term then SBSs in
/// index order) so powers compare exactly.
inline OracleResult enumerate_all(const Instance& in, const cellsleep::power::ProfileTable& prof) {
  const std::size_t n = in.cfg.num_sbs();
  const auto& macro = prof[BsClass::Macro];
  OracleResult best;
  for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
    double mbs = in.loads[0];
    for (std::size_t j = 1; j <= n; ++j) {
      if (mask >> (j - 1) & 1u) {
        const auto& p = prof[in.cfg.sbs_classes[j - 1]];
        mbs += in.loads[j] * (p.bandwidth_mhz / macro.bandwidth_mhz);
      }
    }
    if (mbs > in.cfg.mbs_capacity_limit) continue;
    double total = earth(macro, mbs, true);
    for (std::size_t j = 1; j <= n; ++j) {
      total += earth(prof[in.cfg.sbs_classes[j - 1]], in.loads[j], !(mask >> (j - 1) & 1u));
    }
    if (total < best.power) {
      best.power = total;
      best.off_mask = mask;
    }
  }
  return best;
}

}  // namespace support
