#include "cellsleep/fedlearn.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <ostream>
#include <random>

#include "cellsleep/errors.hpp"

namespace cellsleep::fl {

ClientDataset::ClientDataset(std::string sbs_id, std::span<const double> series, std::size_t window)
    : ClientDataset(std::move(sbs_id), series, window,
                    traffic::IndexRange{0, samples_in(series.size(), window)}) {}

ClientDataset::ClientDataset(std::string sbs_id, std::span<const double> series,
                             std::size_t window, traffic::IndexRange samples)
    : sbs_id_(std::move(sbs_id)), window_(window) {
  if (window == 0) throw ShapeError("window must be >= 1");
  if (samples.end > samples_in(series.size(), window) || samples.begin > samples.end) {
    throw ShapeError("sample range exceeds the series for client '" + sbs_id_ + "'");
  }
  inputs_.reserve(samples.size() * window);
  targets_.reserve(samples.size());
  for (std::size_t v = samples.begin; v < samples.end; ++v) {
    inputs_.insert(inputs_.end(), series.begin() + static_cast<std::ptrdiff_t>(v),
                   series.begin() + static_cast<std::ptrdiff_t>(v + window));
    targets_.push_back(series[v + window]);
  }
}

ClientSplit make_client_split(const std::string& sbs_id, std::span<const double> series,
                              std::size_t window) {
  const std::size_t n = ClientDataset::samples_in(series.size(), window);
  const auto s = traffic::split(n, {0.6, 0.2, 0.2}, 1);
  return {ClientDataset(sbs_id, series, window, s.train), ClientDataset(sbs_id, series, window, s.val),
          ClientDataset(sbs_id, series, window, s.test)};
}

nn::LayerSpec predictor_spec(std::size_t window, const std::vector<std::size_t>& hidden) {
  nn::LayerSpec spec;
  spec.widths.push_back(window);
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  spec.widths.push_back(1);
  spec.hidden = nn::Activation::Relu;
  spec.output = nn::OutputActivation::Linear;
  spec.validate();
  return spec;
}

GlobalModel initial_model(const nn::LayerSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {spec, nn::init_params(spec, rng)};
}

void FederationConfig::validate() const {
  if (batch_size == 0) throw ValidationError("batch_size must be >= 1");
  if (!(client_lr >= 0.0)) throw ValidationError("client_lr must be >= 0");
}

LocalTrainingResult local_training(const ClientDataset& client, const GlobalModel& global,
                                   const FederationConfig& cfg, std::uint64_t stream) {
  cfg.validate();
  if (client.size() == 0) throw ValidationError("client '" + client.sbs_id() + "' has no samples");
  if (client.window() != global.spec.input_width()) {
    throw ShapeError("client window does not match the model input width");
  }

  nn::ParamVector params = global.params;
  nn::Optimizer opt(cfg.local_optimizer, params.size(), nn::AdamConfig{cfg.client_lr});
  std::mt19937_64 rng(stream);
  std::vector<std::size_t> order(client.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  LocalTrainingResult result;
  nn::ForwardCache cache;
  nn::Gradient grad(params.size());
  Eigen::VectorXd upstream(1);
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double sq_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double inv_b = 1.0 / static_cast<double>(stop - start);
      std::fill(grad.values.begin(), grad.values.end(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t i = order[k];
        nn::forward_cached(global.spec, params, client.input(i), cache);
        const double err = cache.output()(0) - client.target(i);
        sq_sum += err * err;
        upstream(0) = 2.0 * err * inv_b;
        nn::backward_accumulate(global.spec, params, cache, upstream, grad.span(), nullptr);
      }
      opt.step(params, grad, nn::Direction::Descend);
    }
    result.epoch_loss.push_back(sq_sum / static_cast<double>(order.size()));
  }

  result.update.sample_count = client.size();
  result.update.delta = params;
  result.update.delta.vec() -= global.params.vec();
  return result;
}

nn::ParamVector aggregate(std::span<const ClientUpdate> updates) {
  if (updates.empty()) throw ValidationError("aggregate needs at least one update");
  const std::size_t n = updates.front().delta.size();
  std::size_t total = 0;
  for (const auto& u : updates) {
    if (u.delta.size() != n) throw ShapeError("client deltas differ in shape");
    total += u.sample_count;
  }
  if (total == 0) throw ValidationError("aggregate: total sample count is zero");
  nn::ParamVector out(n);
  for (const auto& u : updates) {
    out.vec() += (static_cast<double>(u.sample_count) / static_cast<double>(total)) * u.delta.vec();
  }
  return out;
}

GlobalModel server_update(const GlobalModel& global, const nn::ParamVector& delta,
                          double server_lr) {
  if (delta.size() != global.params.size()) throw ShapeError("server_update: delta shape mismatch");
  GlobalModel next = global;
  next.params.vec() += server_lr * delta.vec();
  return next;
}

FederatedServer::FederatedServer(GlobalModel initial, double server_lr)
    : model_(std::move(initial)), server_lr_(server_lr) {}

void FederatedServer::apply_round(std::span<const ClientUpdate> updates) {
  model_ = server_update(model_, aggregate(updates), server_lr_);
  ++rounds_;
}

std::uint64_t client_stream(std::uint64_t seed, std::size_t round, const std::string& sbs_id) {
  // FNV-1a over the id, mixed with seed and round through seed_seq.
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : sbs_id) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(round), static_cast<std::uint32_t>(h),
                    static_cast<std::uint32_t>(h >> 32)};
  std::array<std::uint32_t, 2> out{};
  seq.generate(out.begin(), out.end());
  return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

FederationResult run_federation(std::span<const ClientDataset> train,
                                std::span<const ClientDataset> val, const GlobalModel& initial,
                                const FederationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (train.empty()) throw ValidationError("federation needs at least one client");
  if (!val.empty() && val.size() != train.size()) {
    throw ValidationError("validation sets must align with training clients");
  }

  FederatedServer server(initial, cfg.server_lr);
  FederationResult result;
  if (!val.empty()) result.log.push_back({0, "global", evaluate_rmse(initial, val)});

  std::vector<LocalTrainingResult> local(train.size());
  for (std::size_t round = 1; round <= cfg.rounds; ++round) {
    const GlobalModel& global = server.broadcast();
    if (cfg.parallel_clients) {
      std::vector<std::future<LocalTrainingResult>> jobs;
      for (const auto& client : train) {
        jobs.push_back(std::async(std::launch::async, [&, round] {
          return local_training(client, global, cfg, client_stream(seed, round, client.sbs_id()));
        }));
      }
      for (std::size_t n = 0; n < jobs.size(); ++n) local[n] = jobs[n].get();
    } else {
      for (std::size_t n = 0; n < train.size(); ++n) {
        local[n] = local_training(train[n], global, cfg,
                                  client_stream(seed, round, train[n].sbs_id()));
      }
    }

    std::vector<ClientUpdate> updates;
    updates.reserve(local.size());
    for (auto& l : local) updates.push_back(std::move(l.update));

    if (!val.empty()) {
      for (std::size_t n = 0; n < train.size(); ++n) {
        GlobalModel client_model = server_update(global, updates[n].delta, 1.0);
        result.log.push_back(
            {round, train[n].sbs_id(), evaluate_rmse(client_model, val.subspan(n, 1))});
      }
    }
    server.apply_round(updates);
    if (!val.empty()) result.log.push_back({round, "global", evaluate_rmse(server.broadcast(), val)});
  }
  result.model = server.broadcast();
  return result;
}

double rmse(std::span<const double> pred, std::span<const double> target) {
  if (pred.empty() || pred.size() != target.size()) {
    throw ShapeError("rmse needs equal-length, non-empty vectors");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    sq += d * d;
  }
  return std::sqrt(sq / static_cast<double>(pred.size()));
}

std::vector<double> predict(const GlobalModel& model, const ClientDataset& data) {
  std::vector<double> out;
  out.reserve(data.size());
  nn::ForwardCache cache;
  for (std::size_t i = 0; i < data.size(); ++i) {
    nn::forward_cached(model.spec, model.params, data.input(i), cache);
    out.push_back(cache.output()(0));
  }
  return out;
}

double evaluate_rmse(const GlobalModel& model, std::span<const ClientDataset> data) {
  std::vector<double> pred;
  std::vector<double> target;
  for (const auto& d : data) {
    auto p = predict(model, d);
    pred.insert(pred.end(), p.begin(), p.end());
    target.insert(target.end(), d.targets().begin(), d.targets().end());
  }
  return rmse(pred, target);
}

std::vector<double> predict_loads(const GlobalModel& model,
                                  std::span<const std::vector<double>> histories) {
  std::vector<double> out;
  out.reserve(histories.size());
  nn::ForwardCache cache;
  for (const auto& h : histories) {
    if (h.size() != model.spec.input_width()) {
      throw ShapeError("history of length " + std::to_string(h.size()) + ", model expects " +
                       std::to_string(model.spec.input_width()));
    }
    nn::forward_cached(model.spec, model.params, h, cache);
    out.push_back(std::clamp(cache.output()(0), 0.0, 1.0));
  }
  return out;
}

void write_round_log_csv(std::ostream& out, std::span<const RoundLog> log) {
  out << "round,client_id,rmse\n";
  char buf[64];
  for (const auto& r : log) {
    std::snprintf(buf, sizeof(buf), "%.10g", r.rmse);
    out << r.round << ',' << r.client << ',' << buf << '\n';
  }
}

nn::Checkpoint to_checkpoint(const GlobalModel& model) {
  nn::Checkpoint ckpt;
  ckpt.blocks.push_back({"predictor", model.spec, model.params});
  ckpt.meta["kind"] = "load_predictor";
  return ckpt;
}

GlobalModel from_checkpoint(const nn::Checkpoint& ckpt) {
  const auto& b = ckpt.block("predictor");
  return {b.spec, b.params};
}

}  // namespace cellsleep::fl
