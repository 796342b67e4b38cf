#pragma once

// Slotted activity traces: CSV ingestion, grid-to-BS mapping, load
// normalization, chronological splitting and a synthetic diurnal generator.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cellsleep/network.hpp"

namespace cellsleep::traffic {

inline constexpr std::size_t kSlotsPerDay = 144;

/// Per-grid activity values, one per 10-minute slot.
using GridTable = std::map<std::string, std::vector<double>>;

struct IngestResult {
  GridTable grids;
  std::size_t filled_slots = 0;  // missing (grid, slot) cells imputed as 0
};

/// Reads `grid_id,slot_index,activity` rows (header required unless the
/// stream is empty). Every grid is padded to the trace-wide slot count.
/// Throws ParseError (with line number) or ValidationError.
IngestResult ingest_trace(std::istream& in);

/// Writes the same schema, grids in key order, slots ascending.
void write_trace(std::ostream& out, const GridTable& grids);

/// Which grids feed which base station of a macro cell.
struct BsTrafficMap {
  std::array<std::string, 2> mbs_grids;
  std::vector<std::string> sbs_grids;  // one per SBS, in SBS order

  /// Throws ValidationError on duplicate ids.
  void validate() const;
  /// "g000"/"g001" for the macro, then one grid per SBS.
  static BsTrafficMap sequential(std::size_t num_sbs, const GridTable& grids);
};

/// Per-BS load series (index 0 = MBS) plus the per-class constants used.
struct LoadTrace {
  std::vector<std::vector<double>> per_bs;  // [bs][slot], values in [0, 1]
  std::array<double, power::kNumBsClasses> class_scale{};

  std::size_t num_slots() const { return per_bs.empty() ? 0 : per_bs.front().size(); }
  std::size_t num_bs() const { return per_bs.size(); }
  /// Loads of every BS at one slot.
  std::vector<double> slot(std::size_t t) const;
};

/// Max-normalizes each BS class so its largest observed value maps to 1.
/// The macro series is the elementwise sum of its two grids.
LoadTrace normalize_to_loads(const GridTable& grids, const BsTrafficMap& map,
                             const net::MacroCellConfig& cfg);

struct SynthParams {
  std::size_t n_days = 31;
  std::size_t n_series = 6;
  double amplitude_min = 0.6;
  double amplitude_max = 1.0;
  double phase_center = 60.0;  // trough at phase - 36 slots (04:00), peak at phase + 36
  double phase_spread = 12.0;
  double noise_std = 0.03;
  std::uint64_t seed = 1;
};

/// a_j (1 + sin(2 pi (t - phi_j) / 144)) / 2 + noise, clipped at 0.
/// Grid ids are "g000", "g001", ...
GridTable synth_diurnal(const SynthParams& params);

struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

struct DatasetSplit {
  IndexRange train, val, test;
};

/// Chronological split by largest-remainder rounding of `ratios`.
/// Throws DomainError when ratios are invalid or total < min_total.
DatasetSplit split(std::size_t total, const std::array<double, 3>& ratios = {0.6, 0.2, 0.2},
                   std::size_t min_total = 1);

}  // namespace cellsleep::traffic
