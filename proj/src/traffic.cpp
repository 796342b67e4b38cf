#include "cellsleep/traffic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numbers>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "cellsleep/errors.hpp"

namespace cellsleep::traffic {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

IngestResult ingest_trace(std::istream& in) {
  std::map<std::string, std::map<std::size_t, double>> sparse;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  std::size_t num_slots = 0;

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = trim(line);
    if (view.empty()) continue;
    if (!header_seen) {
      if (view != "grid_id,slot_index,activity") {
        throw ParseError(line_no, "expected header 'grid_id,slot_index,activity'");
      }
      header_seen = true;
      continue;
    }
    const auto fields = split_fields(view);
    if (fields.size() != 3 || fields[0].empty()) {
      throw ParseError(line_no, "expected 3 fields: grid_id,slot_index,activity");
    }
    std::size_t slot = 0;
    {
      const auto* first = fields[1].data();
      const auto* last = first + fields[1].size();
      auto [ptr, ec] = std::from_chars(first, last, slot);
      if (ec != std::errc{} || ptr != last) throw ParseError(line_no, "bad slot_index");
    }
    double activity = 0.0;
    {
      const auto* first = fields[2].data();
      const auto* last = first + fields[2].size();
      auto [ptr, ec] = std::from_chars(first, last, activity);
      if (ec != std::errc{} || ptr != last || !std::isfinite(activity)) {
        throw ParseError(line_no, "bad activity value");
      }
    }
    if (activity < 0.0) {
      throw ValidationError("line " + std::to_string(line_no) + ": negative activity");
    }
    auto& grid = sparse[std::string(fields[0])];
    if (!grid.emplace(slot, activity).second) {
      throw ValidationError("line " + std::to_string(line_no) + ": duplicate (grid, slot) " +
                            std::string(fields[0]) + "," + std::to_string(slot));
    }
    num_slots = std::max(num_slots, slot + 1);
  }

  IngestResult result;
  for (auto& [id, slots] : sparse) {
    std::vector<double> dense(num_slots, 0.0);
    for (auto [slot, value] : slots) dense[slot] = value;
    result.filled_slots += num_slots - slots.size();
    result.grids.emplace(id, std::move(dense));
  }
  return result;
}

void write_trace(std::ostream& out, const GridTable& grids) {
  out << "grid_id,slot_index,activity\n";
  char buf[64];
  for (const auto& [id, values] : grids) {
    for (std::size_t t = 0; t < values.size(); ++t) {
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), values[t]);
      out << id << ',' << t << ',' << std::string_view(buf, static_cast<std::size_t>(ptr - buf))
          << '\n';
    }
  }
}

void BsTrafficMap::validate() const {
  std::set<std::string> seen;
  auto add = [&](const std::string& id) {
    if (id.empty()) throw ValidationError("empty grid id in traffic map");
    if (!seen.insert(id).second) throw ValidationError("grid '" + id + "' mapped twice");
  };
  for (const auto& id : mbs_grids) add(id);
  for (const auto& id : sbs_grids) add(id);
}

BsTrafficMap BsTrafficMap::sequential(std::size_t num_sbs, const GridTable& grids) {
  if (grids.size() < num_sbs + 2) {
    throw ValidationError("need " + std::to_string(num_sbs + 2) + " grids, trace has " +
                          std::to_string(grids.size()));
  }
  BsTrafficMap map;
  auto it = grids.begin();
  map.mbs_grids[0] = (it++)->first;
  map.mbs_grids[1] = (it++)->first;
  for (std::size_t j = 0; j < num_sbs; ++j) map.sbs_grids.push_back((it++)->first);
  return map;
}

std::vector<double> LoadTrace::slot(std::size_t t) const {
  std::vector<double> out;
  out.reserve(per_bs.size());
  for (const auto& s : per_bs) out.push_back(s.at(t));
  return out;
}

LoadTrace normalize_to_loads(const GridTable& grids, const BsTrafficMap& map,
                             const net::MacroCellConfig& cfg) {
  map.validate();
  if (map.sbs_grids.size() != cfg.num_sbs()) {
    throw ValidationError("traffic map has " + std::to_string(map.sbs_grids.size()) +
                          " SBS grids, network has " + std::to_string(cfg.num_sbs()) + " SBSs");
  }
  auto lookup = [&](const std::string& id) -> const std::vector<double>& {
    auto it = grids.find(id);
    if (it == grids.end()) throw ValidationError("grid '" + id + "' missing from trace");
    return it->second;
  };

  LoadTrace trace;
  const auto& a = lookup(map.mbs_grids[0]);
  const auto& b = lookup(map.mbs_grids[1]);
  const std::size_t n = a.size();
  auto check_len = [&](const std::vector<double>& s, const std::string& id) {
    if (s.size() != n) throw ValidationError("grid '" + id + "' has a different slot count");
  };
  check_len(b, map.mbs_grids[1]);
  std::vector<double> mbs(n);
  for (std::size_t t = 0; t < n; ++t) mbs[t] = a[t] + b[t];
  trace.per_bs.push_back(std::move(mbs));
  for (const auto& id : map.sbs_grids) {
    const auto& s = lookup(id);
    check_len(s, id);
    trace.per_bs.push_back(s);
  }

  trace.class_scale.fill(0.0);
  for (std::size_t j = 0; j < trace.per_bs.size(); ++j) {
    auto& scale = trace.class_scale[power::index_of(cfg.class_of(j))];
    for (double v : trace.per_bs[j]) scale = std::max(scale, v);
  }
  for (auto& scale : trace.class_scale) {
    if (scale == 0.0) scale = 1.0;
  }
  for (std::size_t j = 0; j < trace.per_bs.size(); ++j) {
    const double scale = trace.class_scale[power::index_of(cfg.class_of(j))];
    for (double& v : trace.per_bs[j]) v = std::min(1.0, v / scale);
  }
  return trace;
}

GridTable synth_diurnal(const SynthParams& params) {
  if (params.n_days < 1) throw DomainError("synth_diurnal: n_days must be >= 1");
  if (params.amplitude_min < 0.0 || params.amplitude_max < params.amplitude_min) {
    throw DomainError("synth_diurnal: invalid amplitude range");
  }
  std::mt19937_64 rng(params.seed);
  std::uniform_real_distribution<double> amp(params.amplitude_min, params.amplitude_max);
  std::uniform_real_distribution<double> phase(params.phase_center - params.phase_spread,
                                               params.phase_center + params.phase_spread);
  std::normal_distribution<double> noise(0.0, 1.0);

  const std::size_t n_slots = params.n_days * kSlotsPerDay;
  constexpr double kPeriod = static_cast<double>(kSlotsPerDay);
  GridTable out;
  for (std::size_t j = 0; j < params.n_series; ++j) {
    const double a = amp(rng);
    const double phi = phase(rng);
    std::vector<double> values(n_slots);
    for (std::size_t t = 0; t < n_slots; ++t) {
      const double wave =
          a * (1.0 + std::sin(2.0 * std::numbers::pi * (static_cast<double>(t) - phi) / kPeriod)) /
          2.0;
      const double eps = params.noise_std > 0.0 ? params.noise_std * noise(rng) : 0.0;
      values[t] = std::max(0.0, wave + eps);
    }
    char id[16];
    std::snprintf(id, sizeof(id), "g%03zu", j);
    out.emplace(id, std::move(values));
  }
  return out;
}

DatasetSplit split(std::size_t total, const std::array<double, 3>& ratios, std::size_t min_total) {
  double sum = 0.0;
  for (double r : ratios) {
    if (r < 0.0) throw DomainError("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("split ratios must sum to 1");
  if (total < min_total) {
    throw DomainError("split: " + std::to_string(total) + " samples is shorter than the window " +
                      std::to_string(min_total));
  }

  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double exact = ratios[i] * static_cast<double>(total);
    sizes[i] = static_cast<std::size_t>(std::floor(exact + 1e-9));
    remainder[i] = exact - static_cast<double>(sizes[i]);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return remainder[x] > remainder[y]; });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % 3) {
    ++sizes[order[k]];
    ++assigned;
  }

  DatasetSplit s;
  s.train = {0, sizes[0]};
  s.val = {sizes[0], sizes[0] + sizes[1]};
  s.test = {sizes[0] + sizes[1], total};
  return s;
}

}  // namespace cellsleep::traffic
