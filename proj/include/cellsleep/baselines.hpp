#pragma once

// Reference switching policies: all-always-on, exhaustive search, multi-level
// k-means clustering (MLC) and the threshold hybrid of clustering and
// exhaustive search (THESIS).

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cellsleep/network.hpp"

namespace cellsleep::baselines {

using net::MacroCellConfig;
using power::ProfileTable;
using power::SwitchVector;

/// Largest SBS count exhaustive search accepts.
inline constexpr std::size_t kMaxExhaustiveSbs = 20;

struct PolicyResult {
  SwitchVector gamma;
  double power_w = 0.0;
  bool feasible = false;
};

/// Evaluates an explicit switch vector under the given loads.
PolicyResult evaluate(std::span<const double> loads, const SwitchVector& gamma,
                      const ProfileTable& profiles, const MacroCellConfig& cfg);

PolicyResult aao(std::span<const double> loads, const ProfileTable& profiles,
                 const MacroCellConfig& cfg);

/// Minimum-power feasible vector over all 2^N_sbs candidates. Ties go to
/// fewer off SBSs, then to the lexicographically smallest bit string.
/// Throws CapacityError for more than kMaxExhaustiveSbs SBSs.
PolicyResult exhaustive_search(std::span<const double> loads, const ProfileTable& profiles,
                               const MacroCellConfig& cfg);

/// Exhaustive search over the SBSs in `subset` (1-based BS indices) only;
/// every other SBS stays on.
PolicyResult exhaustive_search_subset(std::span<const double> loads,
                                      std::span<const std::size_t> subset,
                                      const ProfileTable& profiles, const MacroCellConfig& cfg);

struct ClusterAssignment {
  std::size_t k = 0;
  std::vector<std::size_t> labels;  // one per point, in [0, k)
  std::vector<double> centroids;
};

/// Lloyd's algorithm on scalar values. Initial centroids are k distinct
/// points drawn with `seed`; empty clusters are reseeded with the point
/// farthest from its centroid. Throws DomainError unless 1 <= k <= n.
ClusterAssignment kmeans(std::span<const double> values, std::size_t k, std::uint64_t seed,
                         std::size_t max_iters = 100);

struct ClusterOptions {
  std::size_t k_min = 2;  // mlc; thesis always starts from 1
  std::size_t k_max = 8;
  std::size_t thesis_threshold = 10;
  std::uint64_t seed = 7;
};

/// For each k: cluster SBS loads, order clusters by mean load and switch off
/// whole clusters in that order while the macro constraint holds; best
/// prefix over all k (all-on included).
PolicyResult mlc(std::span<const double> loads, const ProfileTable& profiles,
                 const MacroCellConfig& cfg, const ClusterOptions& opt = {});

/// For each k: cluster SBS loads, split clusters larger than the threshold,
/// run exhaustive search inside each cluster with the rest on, and keep the
/// lowest-power outcome (all-on included).
PolicyResult thesis(std::span<const double> loads, const ProfileTable& profiles,
                    const MacroCellConfig& cfg, const ClusterOptions& opt = {});

}  // namespace cellsleep::baselines
