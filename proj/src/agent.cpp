#include "cellsleep/agent.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "cellsleep/errors.hpp"

namespace cellsleep::agent {

namespace {

constexpr double kProbClamp = 1e-7;

nn::LayerSpec make_spec(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                        nn::OutputActivation act) {
  nn::LayerSpec spec;
  spec.widths.push_back(in);
  spec.widths.insert(spec.widths.end(), hidden.begin(), hidden.end());
  if (out > 0) spec.widths.push_back(out);
  spec.hidden = nn::Activation::Relu;
  spec.output = act;
  spec.validate();
  return spec;
}

void check_state(const ActorParams& actor, std::span<const double> encoded) {
  if (encoded.size() != actor.trunk_spec.input_width()) {
    throw ShapeError("state width " + std::to_string(encoded.size()) + " != actor input " +
                     std::to_string(actor.trunk_spec.input_width()));
  }
}

// d/d(head output) of log Bernoulli(a | p), before the sigmoid derivative.
double log_bernoulli_slope(double p, std::uint8_t a) {
  const double pc = std::clamp(p, kProbClamp, 1.0 - kProbClamp);
  return a ? 1.0 / pc : -1.0 / (1.0 - pc);
}

}  // namespace

std::vector<double> encode_state(std::span<const double> loads,
                                 std::span<const std::uint8_t> sbs_status) {
  if (loads.empty() || sbs_status.size() + 1 != loads.size()) {
    throw ShapeError("state needs one load per BS and one status per SBS");
  }
  std::vector<double> s(loads.begin(), loads.end());
  for (auto b : sbs_status) s.push_back(static_cast<double>(b));
  return s;
}

std::size_t AgentAction::num_off() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{0}));
}

ActorParams make_actor(std::size_t num_bs, const Architecture& arch, std::mt19937_64& rng) {
  if (num_bs < 2) throw ShapeError("the agent needs at least one SBS");
  if (arch.trunk_hidden.empty()) throw ShapeError("the actor trunk needs at least one layer");
  ActorParams a;
  // The trunk's last hidden width is its output, kept rectified.
  std::vector<std::size_t> trunk_inner(arch.trunk_hidden.begin(), arch.trunk_hidden.end() - 1);
  a.trunk_spec = make_spec(state_width(num_bs), trunk_inner, arch.trunk_hidden.back(),
                           nn::OutputActivation::Relu);
  a.head_spec = make_spec(arch.trunk_hidden.back(), arch.head_hidden, 1,
                          nn::OutputActivation::Sigmoid);
  a.trunk = nn::init_params(a.trunk_spec, rng);
  for (std::size_t n = 0; n + 1 < num_bs; ++n) a.heads.push_back(nn::init_params(a.head_spec, rng));
  return a;
}

CriticParams make_critic(std::size_t num_bs, const Architecture& arch, std::mt19937_64& rng) {
  if (num_bs < 2) throw ShapeError("the agent needs at least one SBS");
  CriticParams c;
  c.spec = make_spec(state_width(num_bs), arch.critic_hidden, 1, nn::OutputActivation::Linear);
  c.params = nn::init_params(c.spec, rng);
  return c;
}

void actor_forward(const ActorParams& actor, std::span<const double> encoded, ActorForward& out) {
  check_state(actor, encoded);
  nn::forward_cached(actor.trunk_spec, actor.trunk, encoded, out.trunk);
  const Eigen::VectorXd& z = out.trunk.output();
  const std::span<const double> trunk_out(z.data(), static_cast<std::size_t>(z.size()));
  out.heads.resize(actor.num_heads());
  out.probs.resize(actor.num_heads());
  for (std::size_t n = 0; n < actor.num_heads(); ++n) {
    nn::forward_cached(actor.head_spec, actor.heads[n], trunk_out, out.heads[n]);
    out.probs[n] = out.heads[n].output()(0);
  }
}

std::vector<double> actor_probs(const ActorParams& actor, std::span<const double> encoded) {
  ActorForward f;
  actor_forward(actor, encoded, f);
  return f.probs;
}

AgentAction sample_action(std::span<const double> probs, double epsilon, std::mt19937_64& rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw DomainError("exploration rate must be in [0, 1]");
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AgentAction a;
  a.bits.reserve(probs.size());
  for (double p : probs) {
    // Two draws per SBS keep the stream aligned whatever epsilon is.
    const double explore = u(rng);
    const double draw = u(rng);
    const double p_on = explore < epsilon ? 0.5 : p;
    a.bits.push_back(draw < p_on ? 1 : 0);
  }
  return a;
}

double RewardNormalizer::observe(double p_saved) {
  max_ = std::max(max_, p_saved);
  return max_;
}

RewardOutcome reward(std::span<const double> loads, const AgentAction& action,
                     const ProfileTable& profiles, const MacroCellConfig& cfg,
                     RewardNormalizer& normalizer) {
  const SwitchVector gamma = action.to_switch();
  RewardOutcome out;
  out.any_off = action.num_off() > 0;
  out.effective_mbs_load = net::offloaded_mbs_load(loads, gamma, cfg, profiles);
  if (!net::qos_feasible(out.effective_mbs_load, cfg)) {
    out.violation = true;
    out.reward = -1.0;
    return out;
  }
  out.p_saved = net::power_saved(loads, gamma, profiles, cfg);
  if (out.p_saved < 0.0) {
    out.violation = true;
    out.reward = -1.0;
  } else if (!out.any_off) {
    out.reward = -0.1;
  } else if (out.p_saved > 0.0) {
    out.reward = out.p_saved / normalizer.observe(out.p_saved);
  } else {
    out.reward = 0.0;
  }
  return out;
}

double td_error(double r, double v_next, double v_now, double gamma, bool terminal) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("discount must be in [0, 1]");
  return r + (terminal ? 0.0 : gamma * v_next) - v_now;
}

double critic_value(const CriticParams& critic, std::span<const double> encoded) {
  return nn::forward(critic.spec, critic.params, encoded).front();
}

nn::Gradient critic_gradient(const CriticParams& critic, std::span<const double> encoded,
                             double td) {
  if (!std::isfinite(td)) throw DomainError("critic update with non-finite TD error");
  nn::ForwardCache cache;
  nn::forward_cached(critic.spec, critic.params, encoded, cache);
  nn::Gradient g(critic.params.size());
  Eigen::VectorXd up(1);
  up(0) = -2.0 * td;
  nn::backward_accumulate(critic.spec, critic.params, cache, up, g.span(), nullptr);
  return g;
}

CriticParams critic_update(const CriticParams& critic, const Transition& transition, double td,
                           double lr) {
  if (!(lr > 0.0)) throw DomainError("critic learning rate must be positive");
  CriticParams next = critic;
  nn::sgd_step(next.params, critic_gradient(critic, transition.state, td), lr);
  return next;
}

ActorGradients actor_gradients(const ActorParams& actor, std::span<const double> encoded,
                               const AgentAction& action, double td) {
  if (action.bits.size() != actor.num_heads()) throw ShapeError("action width != number of heads");
  ActorForward f;
  actor_forward(actor, encoded, f);
  ActorGradients g;
  Eigen::VectorXd up(1);
  Eigen::VectorXd trunk_up;
  for (std::size_t n = 0; n < actor.num_heads(); ++n) {
    nn::Gradient head_grad(actor.heads[n].size());
    nn::Gradient trunk_grad(actor.trunk.size());
    up(0) = td * log_bernoulli_slope(f.probs[n], action.bits[n]);
    nn::backward_accumulate(actor.head_spec, actor.heads[n], f.heads[n], up, head_grad.span(),
                            &trunk_up);
    nn::backward_accumulate(actor.trunk_spec, actor.trunk, f.trunk, trunk_up, trunk_grad.span(),
                            nullptr);
    g.heads.push_back(std::move(head_grad));
    g.trunk.push_back(std::move(trunk_grad));
  }
  return g;
}

void actor_update(ActorParams& actor, const ActorGradients& grads, double lr_local,
                  double lr_global) {
  if (grads.heads.size() != actor.num_heads() || grads.trunk.size() != actor.num_heads()) {
    throw ShapeError("actor_update: one gradient per head required");
  }
  nn::Gradient mean(actor.trunk.size());
  for (const auto& t : grads.trunk) {
    if (t.size() != mean.size()) throw ShapeError("actor_update: trunk gradient shape mismatch");
    mean.vec() += t.vec();
  }
  mean.vec() /= static_cast<double>(actor.num_heads());
  for (std::size_t n = 0; n < actor.num_heads(); ++n) {
    nn::sgd_step(actor.heads[n], grads.heads[n], lr_local, nn::Direction::Ascend);
  }
  nn::sgd_step(actor.trunk, mean, lr_global, nn::Direction::Ascend);
}

AgentAction act_greedy(const ActorParams& actor, std::span<const double> encoded) {
  AgentAction a;
  for (double p : actor_probs(actor, encoded)) a.bits.push_back(p >= 0.5 ? 1 : 0);
  return a;
}

SwitchVector repair(SwitchVector gamma, std::span<const double> loads, const MacroCellConfig& cfg,
                    const ProfileTable& profiles) {
  while (!net::qos_feasible(net::offloaded_mbs_load(loads, gamma, cfg, profiles), cfg)) {
    std::size_t best = 0;
    double best_load = -1.0;
    for (std::size_t j = 1; j < gamma.size(); ++j) {
      if (!gamma.is_on(j) && loads[j] > best_load) {
        best = j;
        best_load = loads[j];
      }
    }
    if (best == 0) break;  // all on; the macro alone exceeds its limit
    gamma.set(best, true);
  }
  return gamma;
}

std::size_t Environment::num_episodes_available() const {
  return steps_per_episode == 0 ? 0 : realized.size() / steps_per_episode;
}

void Environment::validate() const {
  cfg.validate();
  if (steps_per_episode == 0) throw ValidationError("steps_per_episode must be >= 1");
  if (observed.size() != realized.size()) {
    throw ValidationError("observed and realized load sequences differ in length");
  }
  if (num_episodes_available() == 0) throw ValidationError("environment holds less than one episode");
  for (std::size_t t = 0; t < realized.size(); ++t) {
    if (realized[t].size() != cfg.num_bs() || observed[t].size() != cfg.num_bs()) {
      throw ShapeError("slot " + std::to_string(t) + " does not hold one load per BS");
    }
  }
}

void Hyperparams::validate() const {
  if (!(actor_lr > 0.0 && critic_lr > 0.0)) throw ValidationError("learning rates must be positive");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must be in [0, 1]");
  if (!(exploration >= 0.0 && exploration <= 1.0)) {
    throw ValidationError("exploration must be in [0, 1]");
  }
}

TrainResult train(const Environment& env, const Hyperparams& hp, std::uint64_t seed) {
  env.validate();
  hp.validate();
  std::mt19937_64 rng(seed);
  TrainResult result;
  result.actor = make_actor(env.cfg.num_bs(), hp.arch, rng);
  result.critic = make_critic(env.cfg.num_bs(), hp.arch, rng);
  ActorParams& actor = result.actor;
  CriticParams& critic = result.critic;

  const std::size_t heads = actor.num_heads();
  const nn::AdamConfig actor_cfg{hp.actor_lr};
  const nn::AdamConfig critic_cfg{hp.critic_lr};
  nn::Optimizer trunk_opt(hp.optimizer, actor.trunk.size(), actor_cfg);
  std::vector<nn::Optimizer> head_opt;
  for (std::size_t n = 0; n < heads; ++n) {
    head_opt.emplace_back(hp.optimizer, actor.heads[n].size(), actor_cfg);
  }
  nn::Optimizer critic_opt(hp.optimizer, critic.params.size(), critic_cfg);

  RewardNormalizer normalizer;
  ActorForward fwd;
  nn::ForwardCache critic_now;
  nn::ForwardCache critic_next;
  nn::Gradient critic_grad(critic.params.size());
  nn::Gradient trunk_grad(actor.trunk.size());
  std::vector<nn::Gradient> head_grads(heads, nn::Gradient(actor.head_spec.param_count()));
  Eigen::VectorXd up(1);
  Eigen::VectorXd head_in_grad;
  Eigen::VectorXd trunk_up(actor.trunk_spec.output_width());
  Eigen::VectorXd trunk_in_unused;

  const std::size_t days = env.num_episodes_available();
  const std::size_t steps = env.steps_per_episode;
  for (std::size_t m = 0; m < hp.episodes; ++m) {
    const std::size_t base = (m % days) * steps;
    std::vector<std::uint8_t> status(heads, 1);
    std::vector<double> state = encode_state(env.observed[base], status);
    EpisodeLog ep;
    ep.episode = m + 1;
    ep.min_reward = std::numeric_limits<double>::infinity();
    ep.max_reward = -std::numeric_limits<double>::infinity();
    double p_saved_sum = 0.0;

    for (std::size_t t = 0; t < steps; ++t) {
      actor_forward(actor, state, fwd);
      const AgentAction action = sample_action(fwd.probs, hp.exploration, rng);
      const RewardOutcome out =
          reward(env.realized[base + t], action, env.profiles, env.cfg, normalizer);
      const bool terminal = t + 1 == steps;
      std::vector<double> next_state =
          terminal ? state : encode_state(env.observed[base + t + 1], action.bits);

      nn::forward_cached(critic.spec, critic.params, state, critic_now);
      double v_next = 0.0;
      if (!terminal) {
        nn::forward_cached(critic.spec, critic.params, next_state, critic_next);
        v_next = critic_next.output()(0);
      }
      const double td = td_error(out.reward, v_next, critic_now.output()(0), hp.gamma, terminal);
      if (!std::isfinite(td)) throw DomainError("non-finite TD error during training");

      std::fill(critic_grad.values.begin(), critic_grad.values.end(), 0.0);
      up(0) = -2.0 * td;
      nn::backward_accumulate(critic.spec, critic.params, critic_now, up, critic_grad.span(),
                              nullptr);
      critic_opt.step(critic.params, critic_grad, nn::Direction::Descend);

      // Heads first; by linearity the trunk receives the mean of the heads'
      // trunk gradients through a single backward pass.
      trunk_up.setZero();
      for (std::size_t n = 0; n < heads; ++n) {
        auto& hg = head_grads[n];
        std::fill(hg.values.begin(), hg.values.end(), 0.0);
        up(0) = td * log_bernoulli_slope(fwd.probs[n], action.bits[n]);
        nn::backward_accumulate(actor.head_spec, actor.heads[n], fwd.heads[n], up, hg.span(),
                                &head_in_grad);
        trunk_up += head_in_grad;
      }
      trunk_up /= static_cast<double>(heads);
      std::fill(trunk_grad.values.begin(), trunk_grad.values.end(), 0.0);
      nn::backward_accumulate(actor.trunk_spec, actor.trunk, fwd.trunk, trunk_up, trunk_grad.span(),
                              nullptr);
      for (std::size_t n = 0; n < heads; ++n) {
        head_opt[n].step(actor.heads[n], head_grads[n], nn::Direction::Ascend);
      }
      trunk_opt.step(actor.trunk, trunk_grad, nn::Direction::Ascend);

      ep.cum_reward += out.reward;
      ep.min_reward = std::min(ep.min_reward, out.reward);
      ep.max_reward = std::max(ep.max_reward, out.reward);
      if (out.reward == -1.0) ++ep.violations;
      p_saved_sum += out.p_saved;
      state = std::move(next_state);
    }
    ep.mean_p_saved = p_saved_sum / static_cast<double>(steps);
    result.log.push_back(ep);
  }
  result.p_saved_max = normalizer.max();
  return result;
}

void write_training_log_csv(std::ostream& out, std::span<const EpisodeLog> log) {
  out << "episode,cum_reward,mean_p_saved,violations\n";
  char buf[128];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%zu\n", e.episode, e.cum_reward,
                  e.mean_p_saved, e.violations);
    out << buf;
  }
}

nn::Checkpoint to_checkpoint(const ActorParams& actor, const CriticParams& critic) {
  nn::Checkpoint ckpt;
  ckpt.blocks.push_back({"trunk", actor.trunk_spec, actor.trunk});
  for (std::size_t n = 0; n < actor.num_heads(); ++n) {
    ckpt.blocks.push_back({"head" + std::to_string(n), actor.head_spec, actor.heads[n]});
  }
  ckpt.blocks.push_back({"critic", critic.spec, critic.params});
  ckpt.meta["kind"] = "switching_agent";
  ckpt.meta["heads"] = actor.num_heads();
  return ckpt;
}

ActorParams actor_from_checkpoint(const nn::Checkpoint& ckpt) {
  ActorParams a;
  const auto& trunk = ckpt.block("trunk");
  a.trunk_spec = trunk.spec;
  a.trunk = trunk.params;
  const auto heads = ckpt.meta.at("heads").get<std::size_t>();
  for (std::size_t n = 0; n < heads; ++n) {
    const auto& h = ckpt.block("head" + std::to_string(n));
    a.head_spec = h.spec;
    a.heads.push_back(h.params);
  }
  if (a.head_spec.input_width() != a.trunk_spec.output_width()) {
    throw ShapeError("checkpoint heads do not fit the trunk");
  }
  return a;
}

CriticParams critic_from_checkpoint(const nn::Checkpoint& ckpt) {
  const auto& c = ckpt.block("critic");
  return {c.spec, c.params};
}

}  // namespace cellsleep::agent
