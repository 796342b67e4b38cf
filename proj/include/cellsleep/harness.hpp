#pragma once

// Experiment orchestration: configuration, the offline/online pipeline,
// metric CSVs, plot-data export and the SBS-count sweep.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cellsleep/agent.hpp"
#include "cellsleep/baselines.hpp"
#include "cellsleep/fedlearn.hpp"
#include "cellsleep/network.hpp"
#include "cellsleep/traffic.hpp"

namespace cellsleep::harness {

enum class LoadSource { Predicted, GroundTruth };

struct TrafficConfig {
  std::string source = "synthetic";  // "synthetic" or "csv"
  std::string path;                  // csv only
  std::vector<std::string> mbs_grids;  // csv only; empty => first grids in id order
  std::vector<std::string> sbs_grids;
  traffic::SynthParams synthetic;    // n_series is derived from the topology
  std::optional<std::uint64_t> synthetic_seed;  // defaults to the experiment seed
  double slot_minutes = 10.0;
  std::size_t slots_per_day = traffic::kSlotsPerDay;
};

struct PredictorConfig {
  fl::FederationConfig federation;
  std::size_t window = fl::kDefaultWindow;
  std::vector<std::size_t> hidden = {32, 16};
};

struct EvaluationConfig {
  LoadSource load_source = LoadSource::Predicted;
  long day = -1;                      // -1 => last day of the trace
  std::size_t retrain_interval_days = 0;  // 0 disables predictor refresh
  std::size_t days = 1;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  net::MacroCellConfig network;
  power::ProfileTable profiles;
  TrafficConfig traffic;
  PredictorConfig predictor;
  agent::Hyperparams agent;
  LoadSource agent_state_source = LoadSource::Predicted;
  EvaluationConfig evaluation;
  std::vector<std::string> policies = {"aao", "es", "mlc", "thesis", "agent"};
  baselines::ClusterOptions clustering;

  /// Throws ConfigError-style ValidationError on any inconsistency.
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Desk-scale defaults: 1 MBS + one SBS of each class.
ExperimentConfig default_config();

/// Load series of the simulated macro cell.
struct TrafficData {
  traffic::LoadTrace loads;
  std::size_t filled_slots = 0;
  traffic::GridTable grids;
};

TrafficData prepare_traffic(const ExperimentConfig& cfg);
/// Raw grid trace the config describes (synthetic or read from CSV).
traffic::GridTable load_grids(const ExperimentConfig& cfg, std::size_t* filled_slots = nullptr);

struct PredictorOutcome {
  fl::GlobalModel model;
  std::vector<fl::RoundLog> log;
};

/// Trains the federated predictor with one client per SBS on the training
/// portion of each SBS's series.
PredictorOutcome train_predictor(const ExperimentConfig& cfg, const TrafficData& data);

/// Per-slot predicted loads of every BS ([slot][bs]). Slots without a full
/// history window fall back to the measured load.
std::vector<std::vector<double>> predict_trace(const fl::GlobalModel& model,
                                               const traffic::LoadTrace& loads);

std::vector<std::vector<double>> realized_trace(const traffic::LoadTrace& loads);

/// Day indices used for agent training and the evaluation days.
struct DayPlan {
  std::vector<std::size_t> train_days;
  std::vector<std::size_t> eval_days;
};
DayPlan plan_days(const ExperimentConfig& cfg, std::size_t num_slots);

agent::Environment build_environment(const ExperimentConfig& cfg,
                                     const std::vector<std::vector<double>>& observed,
                                     const std::vector<std::vector<double>>& realized,
                                     const std::vector<std::size_t>& days);

struct MetricsRow {
  std::size_t slot = 0;
  std::string policy;
  double power_w = 0.0;
  double aao_power_w = 0.0;
  std::size_t n_active_sbs = 0;
  double mbs_load = 0.0;      // after offloading
  double raw_mbs_load = 0.0;  // before offloading
  bool feasible = true;
  bool repaired = false;      // decision had to be fixed against realized loads
  std::string switch_bits;
};

struct PolicySummary {
  std::string policy;
  double energy_j = 0.0;
  double energy_saved_j = 0.0;
  double energy_saved_pct = 0.0;
  double mean_active_sbs = 0.0;
  std::size_t prediction_repairs = 0;
  double max_coverage_loss_pct = 0.0;
};

struct EvaluationResult {
  std::vector<MetricsRow> rows;
  std::vector<PolicySummary> summary;
  std::vector<std::string> skipped_policies;
};

/// Runs every enabled policy slot by slot. Decisions use `observed` loads;
/// feasibility and power use `realized` loads.
EvaluationResult evaluate_policies(const ExperimentConfig& cfg,
                                   const std::vector<std::vector<double>>& observed,
                                   const std::vector<std::vector<double>>& realized,
                                   std::span<const std::size_t> slots,
                                   const agent::ActorParams* actor);

struct PipelineInputs {
  std::optional<std::filesystem::path> predictor_checkpoint;
  std::optional<std::filesystem::path> agent_checkpoint;
};

enum class PipelineStage { Predictor, Agent, Evaluate };

/// Runs the pipeline up to and including `last`, writing every artifact to
/// `out_dir`. Errors are rethrown as StageError. The evaluation result is
/// empty unless `last` is Evaluate.
EvaluationResult run_pipeline(const ExperimentConfig& cfg, const std::filesystem::path& out_dir,
                  PipelineStage last = PipelineStage::Evaluate, const PipelineInputs& inputs = {});

/// Plot-ready CSVs derived from a finished run directory, written to
/// `<dir>/figures`.
void emit_figures(const std::filesystem::path& run_dir);

/// SBS classes for `count` SBSs, assigned round-robin RRH, Micro, Pico, Femto.
std::vector<power::BsClass> round_robin_classes(std::size_t count);

/// Pipeline per SBS count; writes `<out_dir>/sweep.csv` and per-count runs.
void sweep_nsbs(const ExperimentConfig& cfg, const std::vector<std::size_t>& counts,
                const std::filesystem::path& out_dir);

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows);
void write_summary_csv(std::ostream& out, std::span<const PolicySummary> summary);

/// Fixed-precision number formatting used by every CSV the harness writes.
std::string fmt_num(double x);

}  // namespace cellsleep::harness
