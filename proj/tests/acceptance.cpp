// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cellsleep/agent.hpp"
#include "cellsleep/baselines.hpp"
#include "cellsleep/errors.hpp"
#include "cellsleep/fedlearn.hpp"
#include "cellsleep/harness.hpp"
#include "cellsleep/network.hpp"
#include "cellsleep/power_model.hpp"
#include "support.hpp"

#ifndef CELLSLEEP_CLI
#error "CELLSLEEP_CLI must name the CLI binary"
#endif

namespace fs = std::filesystem;
using namespace cellsleep;
using power::BsClass;
using power::SwitchVector;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Line {
  int id;
  std::string name;
  Outcome out;
  double seconds;
};

// Decisions seen anywhere in this run, checked together by criterion 4.
struct QosLedger {
  std::size_t decisions = 0;
  std::size_t infeasible = 0;
  double max_loss = 0.0;

  void record(std::span<const double> loads, const SwitchVector& g,
              const net::MacroCellConfig& cfg, const power::ProfileTable& prof) {
    ++decisions;
    if (!net::qos_feasible(net::offloaded_mbs_load(loads, g, cfg, prof), cfg)) ++infeasible;
    const double demand = net::total_demand(loads, cfg, prof);
    if (demand > 0.0) {
      max_loss = std::max(max_loss,
                          net::coverage_loss(demand, net::served_traffic(loads, g, cfg, prof)));
    }
  }
  void record(const harness::EvaluationResult& ev) {
    for (const auto& r : ev.rows) {
      ++decisions;
      if (!r.feasible) ++infeasible;
    }
    for (const auto& s : ev.summary) max_loss = std::max(max_loss, s.max_coverage_loss_pct);
  }
};

struct RewardLedger {
  std::size_t episodes = 0;
  double lo = 0.0, hi = 0.0;
  void record(std::span<const agent::EpisodeLog> log) {
    for (const auto& e : log) {
      if (episodes++ == 0) {
        lo = e.min_reward;
        hi = e.max_reward;
      }
      lo = std::min(lo, e.min_reward);
      hi = std::max(hi, e.max_reward);
    }
  }
};

QosLedger g_qos;
RewardLedger g_rewards;

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::vector<support::Instance> instances() {
  std::mt19937_64 rng(20240601);
  std::vector<support::Instance> out;
  for (int i = 0; i < 1000; ++i) out.push_back(support::random_instance(rng, 10));
  return out;
}

Outcome c1_power_oracle() {
  const power::ProfileTable t;
  const std::map<BsClass, std::array<double, 5>> golden = {
      {BsClass::Macro, {130, 153.5, 177, 200.5, 224}},
      {BsClass::Rrh, {84, 98, 112, 126, 140}},
      {BsClass::Micro, {56, 60.095, 64.19, 68.285, 72.38}},
      {BsClass::Pico, {6.8, 6.93, 7.06, 7.19, 7.32}},
      {BsClass::Femto, {4.8, 4.9, 5.0, 5.1, 5.2}},
  };
  const std::array<double, 5> psi = {0, 0.25, 0.5, 0.75, 1};
  Outcome o;
  double worst = 0.0;
  std::size_t n = 0;
  for (const auto& [c, vals] : golden) {
    for (std::size_t i = 0; i < psi.size(); ++i) {
      const double p = power::instantaneous_power(t[c], psi[i], true);
      worst = std::max(worst, std::abs(p - vals[i]));
      ++n;
    }
  }
  o.pass = n == 25 && worst < 1e-9;
  o.detail = fmt("%g golden values, max abs error %.3g W", static_cast<double>(n), worst);
  return o;
}

Outcome c2_es_optimality(const std::vector<support::Instance>& ins) {
  const power::ProfileTable t;
  std::size_t mismatch = 0;
  for (const auto& in : ins) {
    const auto es = baselines::exhaustive_search(in.loads, t, in.cfg);
    const auto ref = support::enumerate_all(in, t);
    if (!es.feasible || es.power_w != ref.power) ++mismatch;
  }
  return {mismatch == 0, fmt("%g instances, %g mismatches vs enumeration oracle",
                             static_cast<double>(ins.size()), static_cast<double>(mismatch))};
}

Outcome c3_dominance(const std::vector<support::Instance>& ins) {
  const power::ProfileTable t;
  std::size_t bad = 0;
  for (const auto& in : ins) {
    const auto es = baselines::exhaustive_search(in.loads, t, in.cfg);
    const auto th = baselines::thesis(in.loads, t, in.cfg);
    const auto ml = baselines::mlc(in.loads, t, in.cfg);
    const auto on = baselines::aao(in.loads, t, in.cfg);
    for (const auto* r : {&es, &th, &ml, &on}) g_qos.record(in.loads, r->gamma, in.cfg, t);
    const bool ok = es.power_w <= th.power_w && th.power_w <= on.power_w &&
                    es.power_w <= ml.power_w && ml.power_w <= on.power_w;
    if (!ok) ++bad;
  }
  return {bad == 0, fmt("%g instances, %g ordering violations", static_cast<double>(ins.size()),
                        static_cast<double>(bad))};
}

Outcome c4_qos() {
  const bool ok = g_qos.decisions > 0 && g_qos.infeasible == 0 && g_qos.max_loss == 0.0;
  return {ok, fmt("%g decisions, %g infeasible, max coverage loss %g%%",
                  static_cast<double>(g_qos.decisions), static_cast<double>(g_qos.infeasible),
                  g_qos.max_loss)};
}

Outcome c5_fedavg_algebra() {
  std::mt19937_64 rng(515);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> count(1, 1000), clients(1, 10), width(1, 64);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t w = width(rng);
    std::vector<fl::ClientUpdate> ups(clients(rng));
    for (auto& u : ups) {
      u.delta = nn::ParamVector(w);
      for (auto& v : u.delta.values) v = nd(rng);
      u.sample_count = count(rng);
    }
    const auto agg = fl::aggregate(ups);
    double total = 0;
    for (const auto& u : ups) total += static_cast<double>(u.sample_count);
    for (std::size_t i = 0; i < w; ++i) {
      double ref = 0;
      for (const auto& u : ups) ref += static_cast<double>(u.sample_count) * u.delta.values[i];
      worst = std::max(worst, std::abs(agg.values[i] - ref / total));
    }
  }

  traffic::SynthParams sp;
  sp.n_days = 3;
  sp.n_series = 1;
  sp.seed = 55;
  const auto series = traffic::synth_diurnal(sp).begin()->second;
  const fl::ClientDataset c("sbs1", series, 16);
  const auto init = fl::initial_model(fl::predictor_spec(16, {12, 8}), 21);
  fl::FederationConfig cfg;
  cfg.rounds = 5;
  cfg.local_epochs = 3;
  const std::vector<fl::ClientDataset> one{c};
  const auto fed = fl::run_federation(one, {}, init, cfg, 77);
  fl::GlobalModel solo = init;
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    const auto res = fl::local_training(c, solo, cfg, fl::client_stream(77, r, c.sbs_id()));
    solo.params.vec() += res.update.delta.vec();
  }
  const bool same = fed.model.params == solo.params;
  return {worst < 1e-12 && same,
          fmt("max aggregate error %.3g over 100 sets, single-client bit-identical %g", worst,
              same ? 1.0 : 0.0)};
}

Outcome c6_federated_convergence() {
  // One SBS per class, loads normalized exactly as the pipeline feeds the predictor.
  auto exp = harness::default_config();
  exp.seed = 6;
  const auto data = harness::prepare_traffic(exp);
  std::vector<fl::ClientDataset> train, val;
  for (std::size_t j = 1; j < data.loads.num_bs(); ++j) {
    auto s = fl::make_client_split("sbs" + std::to_string(j), data.loads.per_bs[j],
                                   fl::kDefaultWindow);
    train.push_back(std::move(s.train));
    val.push_back(std::move(s.val));
  }
  const auto init = fl::initial_model(fl::predictor_spec(fl::kDefaultWindow, {32, 16}), 6);
  fl::FederationConfig cfg;
  cfg.rounds = 20;
  const double untrained = fl::evaluate_rmse(init, val);
  const auto fed = fl::run_federation(train, val, init, cfg, 6);
  const double global = fl::evaluate_rmse(fed.model, val);

  double best_local = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < train.size(); ++k) {
    const std::vector<fl::ClientDataset> tr{train[k]}, va{val[k]};
    const auto local = fl::run_federation(tr, {}, init, cfg, 6);
    best_local = std::min(best_local, fl::evaluate_rmse(local.model, va));
  }
  const bool ok = global < 0.5 * untrained && global <= 1.5 * best_local;
  return {ok, fmt("global %.4f, untrained %.4f, best local %.4f", global, untrained, best_local)};
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

agent::Architecture reduced_arch() {
  agent::Architecture a;
  a.trunk_hidden = {4, 6, 8, 10};
  a.head_hidden = {8, 6, 4};
  a.critic_hidden = {4, 6, 8, 10, 12, 4};
  return a;
}

Outcome c7_gradients() {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> nd(0.0, 0.2);
  std::bernoulli_distribution coin(0.5);
  const double h = 1e-5;
  const std::size_t num_bs = 4;
  double worst_actor = 0.0, worst_critic = 0.0;

  auto jitter = [&](nn::ParamVector& p) {
    for (auto& v : p.values) v += nd(rng);
  };
  for (int point = 0; point < 50; ++point) {
    auto a = agent::make_actor(num_bs, reduced_arch(), rng);
    jitter(a.trunk);
    for (auto& hd : a.heads) jitter(hd);
    std::vector<double> s;
    for (std::size_t j = 0; j < num_bs; ++j) s.push_back(u(rng));
    for (std::size_t j = 1; j < num_bs; ++j) s.push_back(coin(rng) ? 1.0 : 0.0);
    agent::AgentAction act;
    for (std::size_t j = 1; j < num_bs; ++j) act.bits.push_back(coin(rng));
    const double td = 2 * u(rng) - 1;
    const auto g = agent::actor_gradients(a, s, act, td);
    for (std::size_t n = 0; n < a.num_heads(); ++n) {
      auto objective = [&] {
        const double p = std::clamp(agent::actor_probs(a, s)[n], 1e-12, 1 - 1e-12);
        return td * (act.bits[n] ? std::log(p) : std::log(1 - p));
      };
      auto check = [&](nn::ParamVector& p, const nn::Gradient& grad) {
        for (std::size_t i = 0; i < p.size(); ++i) {
          const double keep = p.values[i];
          p.values[i] = keep + h;
          const double fp = objective();
          p.values[i] = keep - h;
          const double fm = objective();
          p.values[i] = keep;
          const double fd = (fp - fm) / (2 * h);
          if (std::abs(fd) < 1e-7 && std::abs(grad.values[i]) < 1e-7) continue;
          worst_actor = std::max(worst_actor, rel_err(grad.values[i], fd));
        }
      };
      check(a.trunk, g.trunk[n]);
      check(a.heads[n], g.heads[n]);
    }

    auto c = agent::make_critic(num_bs, reduced_arch(), rng);
    jitter(c.params);
    const double target = 2 * u(rng) - 1;
    const double ctd = target - agent::critic_value(c, s);
    const auto cg = agent::critic_gradient(c, s, ctd);
    for (std::size_t i = 0; i < c.params.size(); ++i) {
      const double keep = c.params.values[i];
      c.params.values[i] = keep + h;
      const double fp = std::pow(target - agent::critic_value(c, s), 2);
      c.params.values[i] = keep - h;
      const double fm = std::pow(target - agent::critic_value(c, s), 2);
      c.params.values[i] = keep;
      const double fd = (fp - fm) / (2 * h);
      if (std::abs(fd) < 1e-7 && std::abs(cg.values[i]) < 1e-7) continue;
      worst_critic = std::max(worst_critic, rel_err(cg.values[i], fd));
    }
  }
  return {worst_actor < 1e-4 && worst_critic < 1e-4,
          fmt("50 points each, max rel error actor %.3g critic %.3g", worst_actor, worst_critic)};
}

// Reduced widths at the default depths; measured loads for state and evaluation.
harness::ExperimentConfig agent_config(std::vector<BsClass> classes, std::size_t episodes) {
  auto cfg = harness::default_config();
  cfg.seed = 3;
  cfg.network.sbs_classes = std::move(classes);
  cfg.traffic.synthetic.n_days = 7;
  cfg.agent.episodes = episodes;
  cfg.agent.actor_lr = 1e-4;
  cfg.agent.critic_lr = 1e-3;
  cfg.agent.arch.trunk_hidden = {32, 64};
  cfg.agent.arch.head_hidden = {32, 16};
  cfg.agent.arch.critic_hidden = {64, 32};
  cfg.agent_state_source = harness::LoadSource::GroundTruth;
  cfg.evaluation.load_source = harness::LoadSource::GroundTruth;
  return cfg;
}

struct AgentRun {
  agent::TrainResult trained;
  harness::EvaluationResult eval;
};

AgentRun run_agent(const harness::ExperimentConfig& cfg) {
  const auto data = harness::prepare_traffic(cfg);
  const auto real = harness::realized_trace(data.loads);
  const auto plan = harness::plan_days(cfg, real.size());
  const auto env = harness::build_environment(cfg, real, real, plan.train_days);
  AgentRun run;
  run.trained = agent::train(env, cfg.agent, cfg.seed);
  std::vector<std::size_t> slots;
  for (std::size_t d : plan.eval_days) {
    for (std::size_t t = d * cfg.traffic.slots_per_day; t < (d + 1) * cfg.traffic.slots_per_day;
         ++t) {
      slots.push_back(t);
    }
  }
  run.eval = harness::evaluate_policies(cfg, real, real, slots, &run.trained.actor);
  g_qos.record(run.eval);
  g_rewards.record(run.trained.log);
  return run;
}

double energy_of(const harness::EvaluationResult& ev, const std::string& policy) {
  for (const auto& s : ev.summary) {
    if (s.policy == policy) return s.energy_j;
  }
  throw std::runtime_error("policy " + policy + " missing from evaluation");
}

Outcome c8_agent_learning() {
  auto cfg = agent_config({BsClass::Rrh, BsClass::Micro, BsClass::Pico, BsClass::Femto}, 1000);
  cfg.policies = {"aao", "es", "agent"};
  const auto run = run_agent(cfg);
  const auto& log = run.trained.log;
  double first = 0, last = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    first += log[i].cum_reward / 100;
    last += log[log.size() - 100 + i].cum_reward / 100;
  }
  const double es = energy_of(run.eval, "es");
  const double ag = energy_of(run.eval, "agent");
  const double gap = (ag - es) / es;
  return {gap <= 0.05 && last > first,
          fmt("agent %.0f J vs ES %.0f J (+%.2f%%), reward first100 %.2f", ag, es, 100 * gap,
              first) +
              fmt(" last100 %.2f", last)};
}

Outcome c9_reward_contract() {
  const power::ProfileTable t;
  net::MacroCellConfig rrh;
  rrh.sbs_classes = {BsClass::Rrh};
  const agent::AgentAction on{{1}}, off{{0}};
  agent::RewardNormalizer norm;
  bool golden = true;
  golden &= agent::reward(std::vector<double>{0.3, 0.2}, on, t, rrh, norm).reward == -0.1;
  const auto v = agent::reward(std::vector<double>{0.95, 1.0}, off, t, rrh, norm);
  golden &= v.violation && v.reward == -1.0;
  net::MacroCellConfig femto;
  femto.sbs_classes = {BsClass::Femto};
  golden &= agent::reward(std::vector<double>{0.3, 0.2}, off, t, femto, norm).reward == -1.0;
  agent::RewardNormalizer fresh;
  golden &= agent::reward(std::vector<double>{0.3, 0.2}, off, t, rrh, fresh).reward == 1.0;

  const bool in_range = g_rewards.episodes > 0 && g_rewards.lo >= -1.0 && g_rewards.hi <= 1.0;
  return {golden && in_range, fmt("%g training episodes, rewards in [%g, %g], golden cases %g",
                                  static_cast<double>(g_rewards.episodes), g_rewards.lo,
                                  g_rewards.hi, golden ? 1.0 : 0.0)};
}

Outcome c10_class_preference() {
  std::vector<BsClass> classes;
  for (auto c : {BsClass::Rrh, BsClass::Micro, BsClass::Pico, BsClass::Femto}) {
    classes.insert(classes.end(), 9, c);
  }
  auto cfg = agent_config(classes, 300);
  cfg.policies = {"agent"};
  const auto run = run_agent(cfg);
  std::map<BsClass, double> off;
  for (const auto& r : run.eval.rows) {
    for (std::size_t j = 1; j < r.switch_bits.size(); ++j) {
      if (r.switch_bits[j] == '0') off[cfg.network.class_of(j)] += 1.0;
    }
  }
  const double denom = 9.0 * static_cast<double>(run.eval.rows.size());
  const double f_rrh = off[BsClass::Rrh] / denom, f_micro = off[BsClass::Micro] / denom;
  const double f_pico = off[BsClass::Pico] / denom, f_femto = off[BsClass::Femto] / denom;
  return {f_rrh > f_femto && f_micro > f_femto,
          fmt("switch-off frequency rrh %.3f micro %.3f pico %.3f femto %.3f", f_rrh, f_micro,
              f_pico, f_femto)};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome c11_determinism() {
  const fs::path root = fs::temp_directory_path() / "cellsleep_acceptance_c11";
  fs::remove_all(root);
  fs::create_directories(root);
  auto cfg = harness::default_config();
  cfg.traffic.synthetic.n_days = 5;
  cfg.predictor.federation.rounds = 2;
  cfg.predictor.federation.local_epochs = 1;
  cfg.agent.episodes = 20;
  cfg.agent.arch.trunk_hidden = {16, 16};
  cfg.agent.arch.head_hidden = {8};
  cfg.agent.arch.critic_hidden = {16, 8};
  {
    std::ofstream out(root / "config.json");
    out << harness::config_to_json(cfg).dump(2);
  }
  const std::vector<std::string> runs = {"a", "b"};
  for (const auto& r : runs) {
    const std::string cmd = std::string("\"") + CELLSLEEP_CLI + "\" evaluate -c \"" +
                            (root / "config.json").string() + "\" --seed 11 -o \"" +
                            (root / r).string() + "\" > \"" + (root / (r + ".log")).string() +
                            "\" 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, "cli run " + r + " failed"};
    const std::string fig = std::string("\"") + CELLSLEEP_CLI + "\" emit-figures \"" +
                            (root / r).string() + "\" > /dev/null 2>&1";
    if (std::system(fig.c_str()) != 0) return {false, "emit-figures " + r + " failed"};
  }
  std::size_t compared = 0, differ = 0;
  for (const auto& entry : fs::recursive_directory_iterator(root / "a")) {
    if (entry.path().extension() != ".csv") continue;
    const auto rel = fs::relative(entry.path(), root / "a");
    ++compared;
    if (!fs::exists(root / "b" / rel) || slurp(entry.path()) != slurp(root / "b" / rel)) ++differ;
  }
  std::istringstream metrics(slurp(root / "a" / "metrics.csv"));
  std::string row;
  std::getline(metrics, row);
  std::size_t col = 0;
  for (std::istringstream hs(row); std::getline(hs, row, ',') && row != "feasible";) ++col;
  while (std::getline(metrics, row)) {
    std::istringstream rs(row);
    std::string cell;
    for (std::size_t k = 0; k <= col; ++k) std::getline(rs, cell, ',');
    ++g_qos.decisions;
    if (cell != "1") ++g_qos.infeasible;
  }
  fs::remove_all(root);
  return {compared > 0 && differ == 0,
          fmt("%g metric CSVs compared, %g differ", static_cast<double>(compared),
              static_cast<double>(differ))};
}

}  // namespace

int main() {
  std::vector<Line> lines;
  auto run = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    std::cerr << "running criterion " << id << " (" << name << ")\n";
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    lines.push_back({id, name, o, secs});
  };

  const auto ins = instances();
  run(1, "power model oracle", c1_power_oracle);
  run(2, "ES optimality", [&] { return c2_es_optimality(ins); });
  run(3, "dominance", [&] { return c3_dominance(ins); });
  run(5, "FedAvg algebra", c5_fedavg_algebra);
  run(6, "federated convergence", c6_federated_convergence);
  run(7, "gradient correctness", c7_gradients);
  run(8, "agent learning", c8_agent_learning);
  run(10, "class preference", c10_class_preference);
  run(9, "reward contract", c9_reward_contract);
  run(11, "determinism", c11_determinism);
  run(4, "QoS", c4_qos);

  const std::map<int, double> limits = {{1, 1.0}, {2, 30.0}, {6, 120.0}, {8, 600.0}};
  std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) { return a.id < b.id; });
  bool all = true;
  for (auto& l : lines) {
    if (auto it = limits.find(l.id); it != limits.end() && l.seconds >= it->second) {
      l.out.pass = false;
      l.out.detail += fmt(" (runtime limit %g s exceeded)", it->second);
    }
    all &= l.out.pass;
    std::printf("[%s] C%d %s: %s (%.2f s)\n", l.out.pass ? "PASS" : "FAIL", l.id, l.name.c_str(),
                l.out.detail.c_str(), l.seconds);
  }
  std::fflush(stdout);
  return all ? 0 : 1;
}
