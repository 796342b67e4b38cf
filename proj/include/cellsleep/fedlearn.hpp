#pragma once

// Federated next-slot load prediction. Each SBS is a client holding its own
// windowed samples; the server sees only parameter deltas and sample counts.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "cellsleep/nn.hpp"
#include "cellsleep/traffic.hpp"

namespace cellsleep::fl {

inline constexpr std::size_t kDefaultWindow = 59;

/// Sliding windows over one SBS's load series: sample v maps
/// series[v, v + window) to series[v + window].
class ClientDataset {
 public:
  ClientDataset() = default;
  /// Samples whose index lies in `samples` (defaults to all).
  ClientDataset(std::string sbs_id, std::span<const double> series, std::size_t window);
  ClientDataset(std::string sbs_id, std::span<const double> series, std::size_t window,
                traffic::IndexRange samples);

  const std::string& sbs_id() const { return sbs_id_; }
  std::size_t window() const { return window_; }
  std::size_t size() const { return targets_.size(); }
  std::span<const double> input(std::size_t i) const {
    return {inputs_.data() + i * window_, window_};
  }
  double target(std::size_t i) const { return targets_[i]; }
  std::span<const double> targets() const { return targets_; }

  /// Number of windowed samples a series of `length` slots yields.
  static std::size_t samples_in(std::size_t length, std::size_t window) {
    return length > window ? length - window : 0;
  }

 private:
  std::string sbs_id_;
  std::size_t window_ = 0;
  std::vector<double> inputs_;
  std::vector<double> targets_;
};

/// Train/validation/test datasets of one client, split chronologically 60/20/20.
struct ClientSplit {
  ClientDataset train, val, test;
};
ClientSplit make_client_split(const std::string& sbs_id, std::span<const double> series,
                              std::size_t window);

struct GlobalModel {
  nn::LayerSpec spec;
  nn::ParamVector params;
};

/// window -> hidden... -> 1, ReLU trunk, linear output.
nn::LayerSpec predictor_spec(std::size_t window, const std::vector<std::size_t>& hidden);
GlobalModel initial_model(const nn::LayerSpec& spec, std::uint64_t seed);

struct FederationConfig {
  std::size_t rounds = 20;
  std::size_t local_epochs = 5;
  double client_lr = 0.005;
  double server_lr = 1.0;  // Omega += server_lr * mean delta
  std::size_t batch_size = 16;
  nn::Optimizer::Kind local_optimizer = nn::Optimizer::Kind::Adam;
  bool parallel_clients = false;

  /// Throws ValidationError on zero batch size or negative client rate.
  void validate() const;
};

/// What a client sends back: its parameter change and sample count.
struct ClientUpdate {
  nn::ParamVector delta;
  std::size_t sample_count = 0;
};

struct LocalTrainingResult {
  ClientUpdate update;
  std::vector<double> epoch_loss;  // mean squared error per epoch
};

/// Copies the global parameters, runs `local_epochs` of shuffled mini-batch
/// training on squared error and returns trained-minus-initial.
/// `stream` selects the client's private shuffling sequence.
LocalTrainingResult local_training(const ClientDataset& client, const GlobalModel& global,
                                   const FederationConfig& cfg, std::uint64_t stream);

/// Sample-count-weighted mean of client deltas.
nn::ParamVector aggregate(std::span<const ClientUpdate> updates);

/// Omega + server_lr * delta. A negative rate gives the subtractive form.
GlobalModel server_update(const GlobalModel& global, const nn::ParamVector& delta,
                          double server_lr);

/// Server half of the protocol. Its interface only admits ClientUpdate values,
/// so raw client samples never reach it.
class FederatedServer {
 public:
  explicit FederatedServer(GlobalModel initial, double server_lr = 1.0);

  const GlobalModel& broadcast() const { return model_; }
  /// Aggregates one round of updates (in client-index order) and applies it.
  void apply_round(std::span<const ClientUpdate> updates);
  std::size_t rounds_applied() const { return rounds_; }

 private:
  GlobalModel model_;
  double server_lr_;
  std::size_t rounds_ = 0;
};

struct RoundLog {
  std::size_t round = 0;
  std::string client;  // SBS id, or "global"
  double rmse = 0.0;
};

struct FederationResult {
  GlobalModel model;
  std::vector<RoundLog> log;
};

/// Per-client seed stream for a round; identical (seed, round, id) triples
/// shuffle identically.
std::uint64_t client_stream(std::uint64_t seed, std::size_t round, const std::string& sbs_id);

/// T rounds of broadcast, local training, aggregation and server update.
/// Round 0 in the log is the untrained model. `val` may be empty, in which
/// case no RMSE is logged; when given it must align with `train`.
FederationResult run_federation(std::span<const ClientDataset> train,
                                std::span<const ClientDataset> val, const GlobalModel& initial,
                                const FederationConfig& cfg, std::uint64_t seed);

/// Root mean squared error. Throws ShapeError on empty or unequal inputs.
double rmse(std::span<const double> pred, std::span<const double> target);

std::vector<double> predict(const GlobalModel& model, const ClientDataset& data);
/// RMSE of the model over the concatenation of datasets.
double evaluate_rmse(const GlobalModel& model, std::span<const ClientDataset> data);

/// Next-slot load for each history (each exactly `window` long), clipped to [0, 1].
std::vector<double> predict_loads(const GlobalModel& model,
                                  std::span<const std::vector<double>> histories);

void write_round_log_csv(std::ostream& out, std::span<const RoundLog> log);

nn::Checkpoint to_checkpoint(const GlobalModel& model);
GlobalModel from_checkpoint(const nn::Checkpoint& ckpt);

}  // namespace cellsleep::fl
