#include "cellsleep/baselines.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>

#include "cellsleep/errors.hpp"

namespace cellsleep::baselines {

PolicyResult evaluate(std::span<const double> loads, const SwitchVector& gamma,
                      const ProfileTable& profiles, const MacroCellConfig& cfg) {
  PolicyResult r;
  r.gamma = gamma;
  r.feasible = net::qos_feasible(net::offloaded_mbs_load(loads, gamma, cfg, profiles), cfg);
  r.power_w = r.feasible ? net::network_power(loads, gamma, cfg, profiles)
                         : std::numeric_limits<double>::infinity();
  return r;
}

PolicyResult aao(std::span<const double> loads, const ProfileTable& profiles,
                 const MacroCellConfig& cfg) {
  return evaluate(loads, SwitchVector::all_on(cfg.num_bs()), profiles, cfg);
}

namespace {

// Strictly better: lower power, then fewer off SBSs, then smaller bit string.
bool better(const PolicyResult& a, const PolicyResult& b) {
  if (a.power_w != b.power_w) return a.power_w < b.power_w;
  if (a.gamma.num_off() != b.gamma.num_off()) return a.gamma.num_off() < b.gamma.num_off();
  return a.gamma.bits() < b.gamma.bits();
}

}  // namespace

PolicyResult exhaustive_search_subset(std::span<const double> loads,
                                      std::span<const std::size_t> subset,
                                      const ProfileTable& profiles, const MacroCellConfig& cfg) {
  if (loads.size() != cfg.num_bs()) throw ShapeError("exhaustive search: wrong number of loads");
  if (subset.size() > kMaxExhaustiveSbs) {
    throw CapacityError("exhaustive search is capped at " + std::to_string(kMaxExhaustiveSbs) +
                        " SBSs, got " + std::to_string(subset.size()));
  }
  std::vector<std::size_t> members(subset.begin(), subset.end());
  std::sort(members.begin(), members.end());
  for (std::size_t j : members) {
    if (j == 0 || j >= cfg.num_bs()) throw ShapeError("exhaustive search: bad SBS index");
  }
  if (std::adjacent_find(members.begin(), members.end()) != members.end()) {
    throw ShapeError("exhaustive search: duplicate SBS index");
  }

  // Per-BS terms, summed below in BS index order exactly as network_power does.
  const std::size_t nb = cfg.num_bs();
  std::vector<double> on_w(nb), off_w(nb), shift(nb);
  std::vector<int> member_bit(nb, -1);
  for (std::size_t j = 1; j < nb; ++j) {
    const auto& prof = profiles[cfg.class_of(j)];
    on_w[j] = power::instantaneous_power(prof, loads[j], true);
    off_w[j] = power::instantaneous_power(prof, loads[j], false);
    shift[j] = loads[j] * net::offload_factor(j, cfg, profiles);
  }
  for (std::size_t i = 0; i < members.size(); ++i) member_bit[members[i]] = static_cast<int>(i);
  const auto& macro = profiles[power::BsClass::Macro];

  auto is_off = [&](std::uint64_t mask, std::size_t j) {
    return member_bit[j] >= 0 && (mask >> member_bit[j] & 1u);
  };
  // Lexicographic comparison of the full bit strings ("0" < "1").
  auto lex_less = [&](std::uint64_t a, std::uint64_t b) {
    for (std::size_t j : members) {
      const bool a_off = a >> member_bit[j] & 1u;
      const bool b_off = b >> member_bit[j] & 1u;
      if (a_off != b_off) return a_off;
    }
    return false;
  };

  std::uint64_t best_mask = 0;
  double best_power = net::network_power(loads, SwitchVector::all_on(nb), cfg, profiles);
  int best_off = 0;
  const std::uint64_t combos = std::uint64_t{1} << members.size();
  for (std::uint64_t mask = 1; mask < combos; ++mask) {
    double mbs = loads[0];
    for (std::size_t j = 1; j < nb; ++j) {
      if (is_off(mask, j)) mbs += shift[j];
    }
    if (!net::qos_feasible(mbs, cfg) || mbs > 1.0) continue;
    double total = power::instantaneous_power(macro, mbs, true);
    for (std::size_t j = 1; j < nb; ++j) total += is_off(mask, j) ? off_w[j] : on_w[j];
    const int off = std::popcount(mask);
    if (total < best_power ||
        (total == best_power && (off < best_off || (off == best_off && lex_less(mask, best_mask))))) {
      best_power = total;
      best_off = off;
      best_mask = mask;
    }
  }

  SwitchVector gamma = SwitchVector::all_on(nb);
  for (std::size_t j : members) {
    if (is_off(best_mask, j)) gamma.set(j, false);
  }
  return evaluate(loads, gamma, profiles, cfg);
}

PolicyResult exhaustive_search(std::span<const double> loads, const ProfileTable& profiles,
                               const MacroCellConfig& cfg) {
  std::vector<std::size_t> all(cfg.num_sbs());
  std::iota(all.begin(), all.end(), std::size_t{1});
  return exhaustive_search_subset(loads, all, profiles, cfg);
}

ClusterAssignment kmeans(std::span<const double> values, std::size_t k, std::uint64_t seed,
                         std::size_t max_iters) {
  const std::size_t n = values.size();
  if (k < 1 || k > n) {
    throw DomainError("kmeans: k = " + std::to_string(k) + " outside [1, " + std::to_string(n) + "]");
  }
  ClusterAssignment c;
  c.k = k;
  c.labels.assign(n, 0);
  c.centroids.resize(k);

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Partial Fisher-Yates: the first k positions are a uniform sample.
  for (std::size_t i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
    c.centroids[i] = values[idx[i]];
  }

  std::vector<std::size_t> counts(k);
  auto fix_empty = [&]() {
    bool moved = false;
    std::fill(counts.begin(), counts.end(), 0);
    for (auto l : c.labels) ++counts[l];
    for (std::size_t cl = 0; cl < k; ++cl) {
      if (counts[cl] != 0) continue;
      std::size_t far = n;
      double far_dist = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[c.labels[i]] < 2) continue;
        const double d = std::abs(values[i] - c.centroids[c.labels[i]]);
        if (d > far_dist) {
          far_dist = d;
          far = i;
        }
      }
      --counts[c.labels[far]];
      c.labels[far] = cl;
      counts[cl] = 1;
      c.centroids[cl] = values[far];
      moved = true;
    }
    return moved;
  };
  auto update_centroids = [&]() {
    std::vector<double> sum(k, 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[c.labels[i]] += values[i];
      ++counts[c.labels[i]];
    }
    for (std::size_t cl = 0; cl < k; ++cl) c.centroids[cl] = sum[cl] / static_cast<double>(counts[cl]);
  };

  for (std::size_t iter = 0; iter < std::max<std::size_t>(max_iters, 1); ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::abs(values[i] - c.centroids[0]);
      for (std::size_t cl = 1; cl < k; ++cl) {
        const double d = std::abs(values[i] - c.centroids[cl]);
        if (d < best_d) {
          best_d = d;
          best = cl;
        }
      }
      if (iter == 0 || c.labels[i] != best) changed = true;
      c.labels[i] = best;
    }
    changed = fix_empty() || changed;
    update_centroids();
    if (!changed) break;
  }
  return c;
}

namespace {

// Members (1-based BS indices) of each cluster, ordered by ascending centroid.
std::vector<std::vector<std::size_t>> clusters_by_load(const ClusterAssignment& a) {
  std::vector<std::size_t> order(a.k);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a.centroids[x] < a.centroids[y]; });
  std::vector<std::vector<std::size_t>> members(a.k);
  for (std::size_t i = 0; i < a.labels.size(); ++i) members[a.labels[i]].push_back(i + 1);
  std::vector<std::vector<std::size_t>> out;
  for (auto cl : order) out.push_back(std::move(members[cl]));
  return out;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t k) {
  return seed * 0x9E3779B97F4A7C15ull + k;
}

}  // namespace

PolicyResult mlc(std::span<const double> loads, const ProfileTable& profiles,
                 const MacroCellConfig& cfg, const ClusterOptions& opt) {
  PolicyResult best = aao(loads, profiles, cfg);
  const std::size_t n = cfg.num_sbs();
  if (n == 0) return best;
  const std::span<const double> sbs = loads.subspan(1);
  const std::size_t k_hi = std::min(opt.k_max, n);
  const std::size_t k_lo = std::min(std::max<std::size_t>(opt.k_min, 1), k_hi);
  for (std::size_t k = k_lo; k <= k_hi; ++k) {
    const auto clusters = clusters_by_load(kmeans(sbs, k, mix(opt.seed, k)));
    SwitchVector gamma = SwitchVector::all_on(cfg.num_bs());
    for (const auto& cluster : clusters) {
      SwitchVector trial = gamma;
      for (auto j : cluster) trial.set(j, false);
      PolicyResult cand = evaluate(loads, trial, profiles, cfg);
      if (!cand.feasible) break;
      if (better(cand, best)) best = cand;
      gamma = std::move(trial);
    }
  }
  return best;
}

PolicyResult thesis(std::span<const double> loads, const ProfileTable& profiles,
                    const MacroCellConfig& cfg, const ClusterOptions& opt) {
  if (opt.thesis_threshold < 2) throw DomainError("THESIS threshold must be >= 2");
  PolicyResult best = aao(loads, profiles, cfg);
  const std::size_t n = cfg.num_sbs();
  if (n == 0) return best;
  const std::size_t k_hi = std::min(opt.k_max, n);
  for (std::size_t k = 1; k <= k_hi; ++k) {
    std::deque<std::vector<std::size_t>> pending;
    for (auto& c : clusters_by_load(kmeans(loads.subspan(1), k, mix(opt.seed, k)))) {
      pending.push_back(std::move(c));
    }
    std::size_t splits = 0;
    while (!pending.empty()) {
      std::vector<std::size_t> cluster = std::move(pending.front());
      pending.pop_front();
      if (cluster.size() > opt.thesis_threshold) {
        std::vector<double> member_loads;
        for (auto j : cluster) member_loads.push_back(loads[j]);
        const auto sub = kmeans(member_loads, 2, mix(opt.seed, 1000 + k * 64 + splits++));
        std::vector<std::vector<std::size_t>> parts(2);
        for (std::size_t i = 0; i < cluster.size(); ++i) parts[sub.labels[i]].push_back(cluster[i]);
        for (auto& p : parts) pending.push_back(std::move(p));
        continue;
      }
      PolicyResult cand = exhaustive_search_subset(loads, cluster, profiles, cfg);
      if (better(cand, best)) best = std::move(cand);
    }
  }
  return best;
}

}  // namespace cellsleep::baselines
