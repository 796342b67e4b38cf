#include "cellsleep/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "cellsleep/errors.hpp"

namespace cellsleep::harness {

namespace fs = std::filesystem;
using nlohmann::json;
using power::SwitchVector;

namespace {

const std::set<std::string> kKnownPolicies = {"aao", "es", "mlc", "thesis", "agent"};

std::string_view to_string(LoadSource s) {
  return s == LoadSource::Predicted ? "predicted" : "ground_truth";
}

LoadSource parse_load_source(std::string_view s) {
  if (s == "predicted") return LoadSource::Predicted;
  if (s == "ground_truth") return LoadSource::GroundTruth;
  throw ValidationError("unknown load source '" + std::string(s) + "'");
}

json profile_to_json(const power::PowerProfile& p) {
  return {{"p_fixed", p.p_fixed},
          {"amp_eff", p.amp_eff},
          {"p_tx_max", p.p_tx_max},
          {"p_sleep", p.p_sleep},
          {"bandwidth_mhz", p.bandwidth_mhz}};
}

power::PowerProfile profile_from_json(const json& j, power::PowerProfile base) {
  base.p_fixed = j.value("p_fixed", base.p_fixed);
  base.amp_eff = j.value("amp_eff", base.amp_eff);
  base.p_tx_max = j.value("p_tx_max", base.p_tx_max);
  base.p_sleep = j.value("p_sleep", base.p_sleep);
  base.bandwidth_mhz = j.value("bandwidth_mhz", base.bandwidth_mhz);
  return base;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

bool has_policy(const ExperimentConfig& cfg, std::string_view p) {
  return std::find(cfg.policies.begin(), cfg.policies.end(), p) != cfg.policies.end();
}

}  // namespace

std::string fmt_num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

void ExperimentConfig::validate() const {
  network.validate();
  if (network.num_sbs() == 0) throw ValidationError("network needs at least one SBS");
  if (!(traffic.slot_minutes > 0.0)) throw ValidationError("slot_minutes must be positive");
  if (traffic.slots_per_day == 0) throw ValidationError("slots_per_day must be >= 1");
  if (traffic.source != "synthetic" && traffic.source != "csv") {
    throw ValidationError("traffic.source must be 'synthetic' or 'csv'");
  }
  if (traffic.source == "csv" && traffic.path.empty()) {
    throw ValidationError("traffic.path is required for csv traffic");
  }
  if (!traffic.mbs_grids.empty() || !traffic.sbs_grids.empty()) {
    if (traffic.mbs_grids.size() != 2) throw ValidationError("the MBS takes exactly two grids");
    if (traffic.sbs_grids.size() != network.num_sbs()) {
      throw ValidationError("one grid per SBS is required");
    }
  }
  if (predictor.window == 0) throw ValidationError("predictor window must be >= 1");
  predictor.federation.validate();
  agent.validate();
  if (evaluation.days == 0) throw ValidationError("evaluation.days must be >= 1");
  if (clustering.thesis_threshold < 2) throw ValidationError("thesis_threshold must be >= 2");
  if (clustering.k_max < 1) throw ValidationError("k_max must be >= 1");
  std::set<std::string> seen;
  for (const auto& p : policies) {
    if (!kKnownPolicies.count(p)) throw ValidationError("unknown policy '" + p + "'");
    if (!seen.insert(p).second) throw ValidationError("policy '" + p + "' listed twice");
  }
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.network.sbs_classes = {power::BsClass::Rrh, power::BsClass::Micro, power::BsClass::Pico,
                             power::BsClass::Femto};
  return cfg;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg = default_config();
  try {
    cfg.seed = j.value("seed", cfg.seed);

    if (j.contains("network")) {
      const json& n = j["network"];
      if (n.contains("sbs_classes")) {
        cfg.network.sbs_classes.clear();
        for (const auto& c : n["sbs_classes"]) {
          cfg.network.sbs_classes.push_back(power::parse_bs_class(c.get<std::string>()));
        }
      } else if (n.contains("sbs_counts")) {
        cfg.network.sbs_classes.clear();
        std::map<power::BsClass, std::size_t> counts;
        for (const auto& [name, v] : n["sbs_counts"].items()) {
          const auto c = power::parse_bs_class(name);
          if (c == power::BsClass::Macro) throw ValidationError("sbs_counts cannot include macro");
          counts[c] += v.get<std::size_t>();
        }
        for (const auto& [c, count] : counts) {
          cfg.network.sbs_classes.insert(cfg.network.sbs_classes.end(), count, c);
        }
      }
      cfg.network.mbs_capacity_limit = n.value("mbs_capacity_limit", cfg.network.mbs_capacity_limit);
      if (n.contains("offload_scaling")) {
        cfg.network.offload_scaling =
            net::parse_offload_scaling(n["offload_scaling"].get<std::string>());
      }
      if (n.contains("profiles")) {
        for (const auto& [name, pj] : n["profiles"].items()) {
          const auto c = power::parse_bs_class(name);
          cfg.profiles.set(c, profile_from_json(pj, cfg.profiles[c]));
        }
      }
    }

    if (j.contains("traffic")) {
      const json& t = j["traffic"];
      cfg.traffic.source = t.value("source", cfg.traffic.source);
      cfg.traffic.path = t.value("path", cfg.traffic.path);
      cfg.traffic.mbs_grids = t.value("mbs_grids", cfg.traffic.mbs_grids);
      cfg.traffic.sbs_grids = t.value("sbs_grids", cfg.traffic.sbs_grids);
      cfg.traffic.slot_minutes = t.value("slot_minutes", cfg.traffic.slot_minutes);
      cfg.traffic.slots_per_day = t.value("slots_per_day", cfg.traffic.slots_per_day);
      if (t.contains("synthetic")) {
        const json& s = t["synthetic"];
        auto& p = cfg.traffic.synthetic;
        p.n_days = s.value("n_days", p.n_days);
        p.amplitude_min = s.value("amplitude_min", p.amplitude_min);
        p.amplitude_max = s.value("amplitude_max", p.amplitude_max);
        p.phase_center = s.value("phase_center", p.phase_center);
        p.phase_spread = s.value("phase_spread", p.phase_spread);
        p.noise_std = s.value("noise_std", p.noise_std);
        if (s.contains("seed")) cfg.traffic.synthetic_seed = s["seed"].get<std::uint64_t>();
      }
    }

    if (j.contains("predictor")) {
      const json& p = j["predictor"];
      auto& f = cfg.predictor.federation;
      cfg.predictor.window = p.value("window", cfg.predictor.window);
      cfg.predictor.hidden = p.value("hidden", cfg.predictor.hidden);
      f.rounds = p.value("rounds", f.rounds);
      f.local_epochs = p.value("local_epochs", f.local_epochs);
      f.client_lr = p.value("client_lr", f.client_lr);
      f.server_lr = p.value("server_lr", f.server_lr);
      f.batch_size = p.value("batch_size", f.batch_size);
      f.parallel_clients = p.value("parallel_clients", f.parallel_clients);
      if (p.contains("optimizer")) f.local_optimizer = nn::parse_optimizer(p["optimizer"].get<std::string>());
    }

    if (j.contains("agent")) {
      const json& a = j["agent"];
      auto& h = cfg.agent;
      h.episodes = a.value("episodes", h.episodes);
      h.actor_lr = a.value("actor_lr", h.actor_lr);
      h.critic_lr = a.value("critic_lr", h.critic_lr);
      h.gamma = a.value("gamma", h.gamma);
      h.exploration = a.value("exploration", h.exploration);
      if (a.contains("optimizer")) h.optimizer = nn::parse_optimizer(a["optimizer"].get<std::string>());
      h.arch.trunk_hidden = a.value("trunk_layers", h.arch.trunk_hidden);
      h.arch.head_hidden = a.value("head_layers", h.arch.head_hidden);
      h.arch.critic_hidden = a.value("critic_layers", h.arch.critic_hidden);
      if (a.contains("state_source")) {
        cfg.agent_state_source = parse_load_source(a["state_source"].get<std::string>());
      }
    }

    if (j.contains("evaluation")) {
      const json& e = j["evaluation"];
      if (e.contains("load_source")) {
        cfg.evaluation.load_source = parse_load_source(e["load_source"].get<std::string>());
      }
      cfg.evaluation.day = e.value("day", cfg.evaluation.day);
      cfg.evaluation.days = e.value("days", cfg.evaluation.days);
      cfg.evaluation.retrain_interval_days =
          e.value("retrain_interval_days", cfg.evaluation.retrain_interval_days);
    }

    cfg.policies = j.value("policies", cfg.policies);

    if (j.contains("clustering")) {
      const json& c = j["clustering"];
      cfg.clustering.k_min = c.value("k_min", cfg.clustering.k_min);
      cfg.clustering.k_max = c.value("k_max", cfg.clustering.k_max);
      cfg.clustering.thesis_threshold = c.value("thesis_threshold", cfg.clustering.thesis_threshold);
      cfg.clustering.seed = c.value("seed", cfg.clustering.seed);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;

  json classes = json::array();
  for (auto c : cfg.network.sbs_classes) classes.push_back(power::to_string(c));
  json profiles = json::object();
  for (auto c : power::kAllBsClasses) profiles[std::string(power::to_string(c))] = profile_to_json(cfg.profiles[c]);
  j["network"] = {{"sbs_classes", classes},
                  {"mbs_capacity_limit", cfg.network.mbs_capacity_limit},
                  {"offload_scaling", net::to_string(cfg.network.offload_scaling)},
                  {"profiles", profiles}};

  const auto& s = cfg.traffic.synthetic;
  json synth = {{"n_days", s.n_days},
                {"amplitude_min", s.amplitude_min},
                {"amplitude_max", s.amplitude_max},
                {"phase_center", s.phase_center},
                {"phase_spread", s.phase_spread},
                {"noise_std", s.noise_std}};
  if (cfg.traffic.synthetic_seed) synth["seed"] = *cfg.traffic.synthetic_seed;
  j["traffic"] = {{"source", cfg.traffic.source},
                  {"path", cfg.traffic.path},
                  {"mbs_grids", cfg.traffic.mbs_grids},
                  {"sbs_grids", cfg.traffic.sbs_grids},
                  {"synthetic", synth},
                  {"slot_minutes", cfg.traffic.slot_minutes},
                  {"slots_per_day", cfg.traffic.slots_per_day}};

  const auto& f = cfg.predictor.federation;
  j["predictor"] = {{"window", cfg.predictor.window},
                    {"hidden", cfg.predictor.hidden},
                    {"rounds", f.rounds},
                    {"local_epochs", f.local_epochs},
                    {"client_lr", f.client_lr},
                    {"server_lr", f.server_lr},
                    {"batch_size", f.batch_size},
                    {"parallel_clients", f.parallel_clients},
                    {"optimizer", nn::to_string(f.local_optimizer)}};

  const auto& h = cfg.agent;
  j["agent"] = {{"episodes", h.episodes},
                {"actor_lr", h.actor_lr},
                {"critic_lr", h.critic_lr},
                {"gamma", h.gamma},
                {"exploration", h.exploration},
                {"optimizer", nn::to_string(h.optimizer)},
                {"trunk_layers", h.arch.trunk_hidden},
                {"head_layers", h.arch.head_hidden},
                {"critic_layers", h.arch.critic_hidden},
                {"state_source", to_string(cfg.agent_state_source)}};

  j["evaluation"] = {{"load_source", to_string(cfg.evaluation.load_source)},
                     {"day", cfg.evaluation.day},
                     {"days", cfg.evaluation.days},
                     {"retrain_interval_days", cfg.evaluation.retrain_interval_days}};
  j["policies"] = cfg.policies;
  j["clustering"] = {{"k_min", cfg.clustering.k_min},
                     {"k_max", cfg.clustering.k_max},
                     {"thesis_threshold", cfg.clustering.thesis_threshold},
                     {"seed", cfg.clustering.seed}};
  return j;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("config '" + path.string() + "': " + e.what());
  }
  return config_from_json(j);
}

traffic::GridTable load_grids(const ExperimentConfig& cfg, std::size_t* filled_slots) {
  if (cfg.traffic.source == "csv") {
    std::ifstream in(cfg.traffic.path);
    if (!in) throw ValidationError("cannot open trace '" + cfg.traffic.path + "'");
    auto r = traffic::ingest_trace(in);
    if (filled_slots) *filled_slots = r.filled_slots;
    return std::move(r.grids);
  }
  traffic::SynthParams p = cfg.traffic.synthetic;
  p.n_series = 2 + cfg.network.num_sbs();
  p.seed = cfg.traffic.synthetic_seed.value_or(cfg.seed);
  if (filled_slots) *filled_slots = 0;
  return traffic::synth_diurnal(p);
}

TrafficData prepare_traffic(const ExperimentConfig& cfg) {
  TrafficData data;
  data.grids = load_grids(cfg, &data.filled_slots);
  traffic::BsTrafficMap map;
  if (cfg.traffic.mbs_grids.empty()) {
    map = traffic::BsTrafficMap::sequential(cfg.network.num_sbs(), data.grids);
  } else {
    map.mbs_grids = {cfg.traffic.mbs_grids[0], cfg.traffic.mbs_grids[1]};
    map.sbs_grids = cfg.traffic.sbs_grids;
  }
  data.loads = traffic::normalize_to_loads(data.grids, map, cfg.network);
  if (data.loads.num_slots() < cfg.traffic.slots_per_day) {
    throw ValidationError("trace is shorter than one day");
  }
  return data;
}

PredictorOutcome train_predictor(const ExperimentConfig& cfg, const TrafficData& data) {
  std::vector<fl::ClientDataset> train;
  std::vector<fl::ClientDataset> val;
  for (std::size_t j = 1; j < data.loads.num_bs(); ++j) {
    auto split = fl::make_client_split("sbs" + std::to_string(j), data.loads.per_bs[j],
                                       cfg.predictor.window);
    train.push_back(std::move(split.train));
    val.push_back(std::move(split.val));
  }
  const auto spec = fl::predictor_spec(cfg.predictor.window, cfg.predictor.hidden);
  auto result = fl::run_federation(train, val, fl::initial_model(spec, cfg.seed),
                                   cfg.predictor.federation, cfg.seed);
  return {std::move(result.model), std::move(result.log)};
}

std::vector<std::vector<double>> realized_trace(const traffic::LoadTrace& loads) {
  std::vector<std::vector<double>> out(loads.num_slots());
  for (std::size_t t = 0; t < out.size(); ++t) out[t] = loads.slot(t);
  return out;
}

std::vector<std::vector<double>> predict_trace(const fl::GlobalModel& model,
                                               const traffic::LoadTrace& loads) {
  const std::size_t w = model.spec.input_width();
  auto out = realized_trace(loads);
  nn::ForwardCache cache;
  for (std::size_t b = 0; b < loads.num_bs(); ++b) {
    const auto& series = loads.per_bs[b];
    for (std::size_t t = w; t < series.size(); ++t) {
      nn::forward_cached(model.spec, model.params,
                         std::span<const double>(series.data() + (t - w), w), cache);
      out[t][b] = std::clamp(cache.output()(0), 0.0, 1.0);
    }
  }
  return out;
}

DayPlan plan_days(const ExperimentConfig& cfg, std::size_t num_slots) {
  const std::size_t spd = cfg.traffic.slots_per_day;
  const std::size_t num_days = num_slots / spd;
  if (num_days == 0) throw ValidationError("trace holds no complete day");
  DayPlan plan;
  const auto split = traffic::split(num_slots);
  for (std::size_t d = 0; d < num_days; ++d) {
    if ((d + 1) * spd <= split.train.end) plan.train_days.push_back(d);
  }
  if (plan.train_days.empty()) plan.train_days.push_back(0);

  const long first = cfg.evaluation.day < 0
                         ? static_cast<long>(num_days) - static_cast<long>(cfg.evaluation.days)
                         : cfg.evaluation.day;
  if (first < 0 || static_cast<std::size_t>(first) + cfg.evaluation.days > num_days) {
    throw ValidationError("evaluation days fall outside the trace");
  }
  for (std::size_t i = 0; i < cfg.evaluation.days; ++i) {
    plan.eval_days.push_back(static_cast<std::size_t>(first) + i);
  }
  return plan;
}

agent::Environment build_environment(const ExperimentConfig& cfg,
                                     const std::vector<std::vector<double>>& observed,
                                     const std::vector<std::vector<double>>& realized,
                                     const std::vector<std::size_t>& days) {
  agent::Environment env;
  env.cfg = cfg.network;
  env.profiles = cfg.profiles;
  env.steps_per_episode = cfg.traffic.slots_per_day;
  for (std::size_t d : days) {
    for (std::size_t t = d * env.steps_per_episode; t < (d + 1) * env.steps_per_episode; ++t) {
      env.observed.push_back(observed.at(t));
      env.realized.push_back(realized.at(t));
    }
  }
  return env;
}

EvaluationResult evaluate_policies(const ExperimentConfig& cfg,
                                   const std::vector<std::vector<double>>& observed,
                                   const std::vector<std::vector<double>>& realized,
                                   std::span<const std::size_t> slots,
                                   const agent::ActorParams* actor) {
  const auto& net_cfg = cfg.network;
  const auto& profiles = cfg.profiles;
  EvaluationResult result;

  for (const auto& policy : cfg.policies) {
    if (policy == "es" && net_cfg.num_sbs() > baselines::kMaxExhaustiveSbs) {
      result.skipped_policies.push_back(policy);
      continue;
    }
    if (policy == "agent" && actor == nullptr) {
      throw ValidationError("policy 'agent' requested without a trained agent");
    }
    std::vector<std::uint8_t> status(net_cfg.num_sbs(), 1);
    std::vector<double> powers;
    std::vector<double> aao_powers;
    PolicySummary summary;
    summary.policy = policy;
    double active_sum = 0.0;

    for (std::size_t t : slots) {
      const auto& obs = observed.at(t);
      const auto& real = realized.at(t);
      SwitchVector gamma = SwitchVector::all_on(net_cfg.num_bs());
      if (policy == "es") {
        gamma = baselines::exhaustive_search(obs, profiles, net_cfg).gamma;
      } else if (policy == "mlc") {
        gamma = baselines::mlc(obs, profiles, net_cfg, cfg.clustering).gamma;
      } else if (policy == "thesis") {
        gamma = baselines::thesis(obs, profiles, net_cfg, cfg.clustering).gamma;
      } else if (policy == "agent") {
        const auto action = agent::act_greedy(*actor, agent::encode_state(obs, status));
        gamma = agent::repair(action.to_switch(), obs, net_cfg, profiles);
      }

      MetricsRow row;
      row.slot = t;
      row.policy = policy;
      row.raw_mbs_load = real[0];
      if (!net::qos_feasible(net::offloaded_mbs_load(real, gamma, net_cfg, profiles), net_cfg)) {
        gamma = agent::repair(gamma, real, net_cfg, profiles);
        row.repaired = true;
        ++summary.prediction_repairs;
      }
      row.mbs_load = net::offloaded_mbs_load(real, gamma, net_cfg, profiles);
      row.feasible = net::qos_feasible(row.mbs_load, net_cfg);
      row.power_w = net::network_power(real, gamma, net_cfg, profiles);
      row.aao_power_w =
          net::network_power(real, SwitchVector::all_on(net_cfg.num_bs()), net_cfg, profiles);
      row.n_active_sbs = gamma.num_active_sbs();
      row.switch_bits = gamma.to_string();

      const double demand = net::total_demand(real, net_cfg, profiles);
      if (demand > 0.0) {
        const double loss =
            net::coverage_loss(demand, net::served_traffic(real, gamma, net_cfg, profiles));
        summary.max_coverage_loss_pct = std::max(summary.max_coverage_loss_pct, loss);
      }
      powers.push_back(row.power_w);
      aao_powers.push_back(row.aao_power_w);
      active_sum += static_cast<double>(row.n_active_sbs);
      status.assign(gamma.bits().begin() + 1, gamma.bits().end());
      result.rows.push_back(std::move(row));
    }

    summary.energy_j = net::energy_over_horizon(powers, cfg.traffic.slot_minutes);
    const double aao_energy = net::energy_over_horizon(aao_powers, cfg.traffic.slot_minutes);
    summary.energy_saved_j = net::energy_saved(aao_energy, summary.energy_j);
    summary.energy_saved_pct = aao_energy > 0.0 ? 100.0 * summary.energy_saved_j / aao_energy : 0.0;
    summary.mean_active_sbs = slots.empty() ? 0.0 : active_sum / static_cast<double>(slots.size());
    result.summary.push_back(summary);
  }
  return result;
}

void write_metrics_csv(std::ostream& out, std::span<const MetricsRow> rows) {
  out << "slot,policy,power_w,aao_power_w,n_active_sbs,mbs_load,raw_mbs_load,feasible,repaired,"
         "switch\n";
  for (const auto& r : rows) {
    out << r.slot << ',' << r.policy << ',' << fmt_num(r.power_w) << ',' << fmt_num(r.aao_power_w)
        << ',' << r.n_active_sbs << ',' << fmt_num(r.mbs_load) << ',' << fmt_num(r.raw_mbs_load)
        << ',' << (r.feasible ? 1 : 0) << ',' << (r.repaired ? 1 : 0) << ',' << r.switch_bits
        << '\n';
  }
}

void write_summary_csv(std::ostream& out, std::span<const PolicySummary> summary) {
  out << "policy,energy_j,energy_saved_j,energy_saved_pct,mean_active_sbs,prediction_repairs,"
         "max_coverage_loss_pct\n";
  for (const auto& s : summary) {
    out << s.policy << ',' << fmt_num(s.energy_j) << ',' << fmt_num(s.energy_saved_j) << ','
        << fmt_num(s.energy_saved_pct) << ',' << fmt_num(s.mean_active_sbs) << ','
        << s.prediction_repairs << ',' << fmt_num(s.max_coverage_loss_pct) << '\n';
  }
}

namespace {

// Fine-tunes the predictor on everything observed before `day` and refreshes
// that day's predictions.
void refresh_predictions(const ExperimentConfig& cfg, const TrafficData& data, std::size_t day,
                         fl::GlobalModel& model, std::vector<std::vector<double>>& predicted) {
  const std::size_t spd = cfg.traffic.slots_per_day;
  const std::size_t end = day * spd;
  std::vector<fl::ClientDataset> clients;
  for (std::size_t j = 1; j < data.loads.num_bs(); ++j) {
    std::span<const double> history(data.loads.per_bs[j].data(), end);
    if (fl::ClientDataset::samples_in(end, cfg.predictor.window) == 0) return;
    clients.emplace_back("sbs" + std::to_string(j), history, cfg.predictor.window);
  }
  model = fl::run_federation(clients, {}, model, cfg.predictor.federation, cfg.seed + day).model;
  const auto fresh = predict_trace(model, data.loads);
  for (std::size_t t = end; t < end + spd; ++t) predicted[t] = fresh[t];
}

}  // namespace

EvaluationResult run_pipeline(const ExperimentConfig& cfg, const fs::path& out_dir,
                              PipelineStage last, const PipelineInputs& inputs) {
  stage("config", [&] {
    cfg.validate();
    fs::create_directories(out_dir);
    write_text(out_dir / "config.json", config_to_json(cfg).dump(2) + "\n");
  });

  json meta;
  const TrafficData data = stage("traffic", [&] { return prepare_traffic(cfg); });
  json scale = json::object();
  for (auto c : power::kAllBsClasses) {
    scale[std::string(power::to_string(c))] = data.loads.class_scale[power::index_of(c)];
  }
  meta["class_scale"] = scale;
  meta["filled_slots"] = data.filled_slots;
  meta["num_slots"] = data.loads.num_slots();
  const DayPlan plan = stage("traffic", [&] { return plan_days(cfg, data.loads.num_slots()); });
  meta["train_days"] = plan.train_days;
  meta["eval_days"] = plan.eval_days;

  const bool needs_predictor = last == PipelineStage::Predictor ||
                               cfg.agent_state_source == LoadSource::Predicted ||
                               cfg.evaluation.load_source == LoadSource::Predicted;
  fl::GlobalModel predictor;
  if (needs_predictor) {
    predictor = stage("train-fl", [&] {
      if (inputs.predictor_checkpoint) {
        return fl::from_checkpoint(nn::load_checkpoint(*inputs.predictor_checkpoint));
      }
      auto outcome = train_predictor(cfg, data);
      std::ofstream log(out_dir / "fl_log.csv", std::ios::binary | std::ios::trunc);
      fl::write_round_log_csv(log, outcome.log);
      if (!outcome.log.empty()) meta["predictor_final_val_rmse"] = outcome.log.back().rmse;
      nn::save_checkpoint(out_dir / "fl_model.bin", fl::to_checkpoint(outcome.model));
      return outcome.model;
    });
  }

  auto finish = [&] { write_text(out_dir / "metadata.json", meta.dump(2) + "\n"); };
  if (last == PipelineStage::Predictor) {
    finish();
    return {};
  }

  const auto realized = realized_trace(data.loads);
  auto predicted = needs_predictor ? predict_trace(predictor, data.loads) : realized;

  std::optional<agent::ActorParams> actor;
  if (last == PipelineStage::Agent || has_policy(cfg, "agent")) {
    actor = stage("train-agent", [&] {
      if (inputs.agent_checkpoint) {
        auto a = agent::actor_from_checkpoint(nn::load_checkpoint(*inputs.agent_checkpoint));
        if (a.num_heads() != cfg.network.num_sbs()) {
          throw ShapeError("agent checkpoint has " + std::to_string(a.num_heads()) +
                           " heads, network has " + std::to_string(cfg.network.num_sbs()) + " SBSs");
        }
        return a;
      }
      const auto& observed =
          cfg.agent_state_source == LoadSource::Predicted ? predicted : realized;
      const auto env = build_environment(cfg, observed, realized, plan.train_days);
      auto trained = agent::train(env, cfg.agent, cfg.seed);
      std::ofstream log(out_dir / "agent_log.csv", std::ios::binary | std::ios::trunc);
      agent::write_training_log_csv(log, trained.log);
      double rmin = 0.0;
      double rmax = 0.0;
      for (const auto& e : trained.log) {
        rmin = std::min(rmin, e.min_reward);
        rmax = std::max(rmax, e.max_reward);
      }
      meta["agent_reward_min"] = rmin;
      meta["agent_reward_max"] = rmax;
      meta["agent_p_saved_max"] = trained.p_saved_max;
      nn::save_checkpoint(out_dir / "agent_model.bin",
                          agent::to_checkpoint(trained.actor, trained.critic));
      return trained.actor;
    });
  }
  if (last == PipelineStage::Agent) {
    finish();
    return {};
  }

  EvaluationResult eval = stage("evaluate", [&] {
    const std::size_t spd = cfg.traffic.slots_per_day;
    const auto interval = cfg.evaluation.retrain_interval_days;
    if (needs_predictor && interval > 0) {
      for (std::size_t i = 1; i < plan.eval_days.size(); ++i) {
        if (i % interval == 0) refresh_predictions(cfg, data, plan.eval_days[i], predictor, predicted);
      }
    }
    const auto& observed = cfg.evaluation.load_source == LoadSource::Predicted ? predicted : realized;
    std::vector<std::size_t> slots;
    for (std::size_t d : plan.eval_days) {
      for (std::size_t t = d * spd; t < (d + 1) * spd; ++t) slots.push_back(t);
    }
    auto result = evaluate_policies(cfg, observed, realized, slots, actor ? &*actor : nullptr);

    std::ofstream metrics(out_dir / "metrics.csv", std::ios::binary | std::ios::trunc);
    write_metrics_csv(metrics, result.rows);
    std::ofstream summary(out_dir / "summary.csv", std::ios::binary | std::ios::trunc);
    write_summary_csv(summary, result.summary);
    std::ofstream loads(out_dir / "eval_loads.csv", std::ios::binary | std::ios::trunc);
    loads << "slot,bs,class,realized,observed\n";
    for (std::size_t t : slots) {
      for (std::size_t b = 0; b < cfg.network.num_bs(); ++b) {
        loads << t << ',' << b << ',' << power::to_string(cfg.network.class_of(b)) << ','
              << fmt_num(realized[t][b]) << ',' << fmt_num(observed[t][b]) << '\n';
      }
    }
    return result;
  });
  meta["skipped_policies"] = eval.skipped_policies;
  finish();
  return eval;
}

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t col(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw ValidationError("CSV lacks column '" + std::string(name) + "'");
  }
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("missing '" + path.string() + "'");
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      t.rows.push_back(std::move(fields));
    }
  }
  if (first) throw ValidationError("'" + path.string() + "' is empty");
  return t;
}

}  // namespace

void emit_figures(const fs::path& run_dir) {
  const auto metrics = read_csv(run_dir / "metrics.csv");
  const ExperimentConfig cfg = load_config(run_dir / "config.json");
  const fs::path fig = run_dir / "figures";
  fs::create_directories(fig);

  const auto c_slot = metrics.col("slot");
  const auto c_policy = metrics.col("policy");
  const auto c_power = metrics.col("power_w");
  const auto c_aao = metrics.col("aao_power_w");
  const auto c_active = metrics.col("n_active_sbs");
  const auto c_raw = metrics.col("raw_mbs_load");
  const auto c_switch = metrics.col("switch");

  std::vector<std::string> policies;
  for (const auto& r : metrics.rows) {
    if (std::find(policies.begin(), policies.end(), r[c_policy]) == policies.end()) {
      policies.push_back(r[c_policy]);
    }
  }

  std::ofstream power_out(fig / "power_vs_time.csv", std::ios::binary | std::ios::trunc);
  std::ofstream active_out(fig / "active_sbs_vs_time.csv", std::ios::binary | std::ios::trunc);
  power_out << "slot,policy,power_w\n";
  active_out << "slot,policy,n_active_sbs\n";
  for (const auto& r : metrics.rows) {
    power_out << r[c_slot] << ',' << r[c_policy] << ',' << r[c_power] << '\n';
    active_out << r[c_slot] << ',' << r[c_policy] << ',' << r[c_active] << '\n';
  }

  const std::array<power::BsClass, 4> sbs_classes = {power::BsClass::Rrh, power::BsClass::Micro,
                                                     power::BsClass::Pico, power::BsClass::Femto};
  std::array<std::size_t, power::kNumBsClasses> class_size{};
  for (auto c : cfg.network.sbs_classes) ++class_size[power::index_of(c)];

  const double slot_seconds = cfg.traffic.slot_minutes * 60.0;
  constexpr std::size_t kBins = 10;
  std::ofstream class_out(fig / "class_switch_off.csv", std::ios::binary | std::ios::trunc);
  std::ofstream load_out(fig / "energy_saved_vs_mbs_load.csv", std::ios::binary | std::ios::trunc);
  class_out << "policy,class,n_sbs,off_decisions,frequency\n";
  load_out << "policy,mbs_load_lo,mbs_load_hi,slots,energy_saved_j\n";
  for (const auto& p : policies) {
    std::array<std::size_t, power::kNumBsClasses> off{};
    std::array<std::size_t, kBins> bin_slots{};
    std::array<double, kBins> bin_saved{};
    std::size_t n_slots = 0;
    for (const auto& r : metrics.rows) {
      if (r[c_policy] != p) continue;
      ++n_slots;
      const std::string& bits = r[c_switch];
      if (bits.size() != cfg.network.num_bs()) {
        throw ValidationError("switch column does not match the configured network");
      }
      for (std::size_t j = 1; j < bits.size(); ++j) {
        if (bits[j] == '0') ++off[power::index_of(cfg.network.class_of(j))];
      }
      const double raw = std::stod(r[c_raw]);
      const auto bin = std::min(kBins - 1, static_cast<std::size_t>(raw * kBins));
      ++bin_slots[bin];
      bin_saved[bin] += (std::stod(r[c_aao]) - std::stod(r[c_power])) * slot_seconds;
    }
    for (auto c : sbs_classes) {
      const std::size_t k = power::index_of(c);
      const double denom = static_cast<double>(n_slots * class_size[k]);
      class_out << p << ',' << power::to_string(c) << ',' << class_size[k] << ',' << off[k] << ','
                << fmt_num(denom > 0.0 ? static_cast<double>(off[k]) / denom : 0.0) << '\n';
    }
    for (std::size_t b = 0; b < kBins; ++b) {
      load_out << p << ',' << fmt_num(static_cast<double>(b) / kBins) << ','
               << fmt_num(static_cast<double>(b + 1) / kBins) << ',' << bin_slots[b] << ','
               << fmt_num(bin_saved[b]) << '\n';
    }
  }

  if (fs::exists(run_dir / "sweep.csv")) {
    const auto sweep = read_csv(run_dir / "sweep.csv");
    std::ofstream out(fig / "energy_saved_vs_nsbs.csv", std::ios::binary | std::ios::trunc);
    out << "n_sbs,policy,energy_saved_j\n";
    for (const auto& r : sweep.rows) {
      for (std::size_t c = 2; c < sweep.header.size(); ++c) {
        if (c < r.size() && !r[c].empty()) {
          std::string policy = sweep.header[c].substr(0, sweep.header[c].find("_saved_j"));
          out << r[0] << ',' << policy << ',' << r[c] << '\n';
        }
      }
    }
  }
}

std::vector<power::BsClass> round_robin_classes(std::size_t count) {
  const std::array<power::BsClass, 4> order = {power::BsClass::Rrh, power::BsClass::Micro,
                                               power::BsClass::Pico, power::BsClass::Femto};
  std::vector<power::BsClass> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(order[i % order.size()]);
  return out;
}

void sweep_nsbs(const ExperimentConfig& cfg, const std::vector<std::size_t>& counts,
                const fs::path& out_dir) {
  if (counts.empty()) throw ValidationError("sweep needs at least one SBS count");
  fs::create_directories(out_dir);
  const std::vector<std::string> columns = {"es", "mlc", "thesis", "agent"};
  std::ostringstream csv;
  csv << "n_sbs,aao_energy_j";
  for (const auto& c : columns) csv << ',' << c << "_saved_j";
  csv << '\n';

  for (std::size_t n : counts) {
    if (n == 0) throw ValidationError("SBS counts must be >= 1");
    ExperimentConfig run = cfg;
    run.network.sbs_classes = round_robin_classes(n);
    run.traffic.mbs_grids.clear();
    run.traffic.sbs_grids.clear();
    if (n > baselines::kMaxExhaustiveSbs) std::erase(run.policies, std::string("es"));
    if (!has_policy(run, "aao")) run.policies.insert(run.policies.begin(), "aao");
    const auto eval = run_pipeline(run, out_dir / ("n_" + std::to_string(n)));

    double aao_energy = 0.0;
    std::map<std::string, double> saved;
    for (const auto& s : eval.summary) {
      if (s.policy == "aao") aao_energy = s.energy_j;
      saved[s.policy] = s.energy_saved_j;
    }
    csv << n << ',' << fmt_num(aao_energy);
    for (const auto& c : columns) {
      csv << ',';
      if (auto it = saved.find(c); it != saved.end()) csv << fmt_num(it->second);
    }
    csv << '\n';
  }
  write_text(out_dir / "sweep.csv", csv.str());
}

}  // namespace cellsleep::harness
