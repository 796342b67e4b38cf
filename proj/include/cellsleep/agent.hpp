#pragma once

// Actor-critic switching agent. The actor is a shared trunk feeding one
// sigmoid head per SBS, so the action space grows linearly with the number of
// SBSs; the critic is a state-value network trained on one-step TD error.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "cellsleep/network.hpp"
#include "cellsleep/nn.hpp"

namespace cellsleep::agent {

using net::MacroCellConfig;
using power::ProfileTable;
using power::SwitchVector;

/// [loads of all BSs (MBS first), on/off status of each SBS].
std::vector<double> encode_state(std::span<const double> loads,
                                 std::span<const std::uint8_t> sbs_status);
inline std::size_t state_width(std::size_t num_bs) { return 2 * num_bs - 1; }

struct AgentState {
  std::vector<double> loads;          // one per BS
  std::vector<std::uint8_t> status;   // one per SBS
  std::vector<double> encoded() const { return encode_state(loads, status); }
};

/// One on/off bit per SBS (1 = on); the macro never appears.
struct AgentAction {
  std::vector<std::uint8_t> bits;

  SwitchVector to_switch() const { return SwitchVector::from_sbs_bits(bits); }
  std::size_t num_off() const;
};

struct Architecture {
  std::vector<std::size_t> trunk_hidden = {32, 64, 128, 256};
  std::vector<std::size_t> head_hidden = {128, 64, 32};
  std::vector<std::size_t> critic_hidden = {32, 64, 128, 256, 512, 32};
};

/// Shared trunk plus one head per SBS. Every head reads the trunk output.
struct ActorParams {
  nn::LayerSpec trunk_spec;
  nn::ParamVector trunk;
  nn::LayerSpec head_spec;
  std::vector<nn::ParamVector> heads;

  std::size_t num_heads() const { return heads.size(); }
};

struct CriticParams {
  nn::LayerSpec spec;
  nn::ParamVector params;
};

ActorParams make_actor(std::size_t num_bs, const Architecture& arch, std::mt19937_64& rng);
CriticParams make_critic(std::size_t num_bs, const Architecture& arch, std::mt19937_64& rng);

/// Intermediate values of one actor evaluation, reused by the gradient code.
struct ActorForward {
  nn::ForwardCache trunk;
  std::vector<nn::ForwardCache> heads;
  std::vector<double> probs;  // probability that each SBS stays on
};

void actor_forward(const ActorParams& actor, std::span<const double> encoded, ActorForward& out);
/// Per-SBS on-probability, each strictly inside (0, 1).
std::vector<double> actor_probs(const ActorParams& actor, std::span<const double> encoded);

/// Per SBS: with probability `epsilon` a fair coin, otherwise Bernoulli(p).
AgentAction sample_action(std::span<const double> probs, double epsilon, std::mt19937_64& rng);

/// Running maximum of positive power savings, starting at 0.
class RewardNormalizer {
 public:
  double max() const { return max_; }
  /// Raises the maximum to `p_saved` if larger and returns the new maximum.
  double observe(double p_saved);

 private:
  double max_ = 0.0;
};

struct RewardOutcome {
  double reward = 0.0;
  double p_saved = 0.0;  // 0 when the action overloads the macro
  double effective_mbs_load = 0.0;
  bool violation = false;
  bool any_off = false;
};

/// -1 on macro overload or negative saving; -0.1 when nothing is switched
/// off; p_saved / running max for a positive saving; 0 otherwise.
RewardOutcome reward(std::span<const double> loads, const AgentAction& action,
                     const ProfileTable& profiles, const MacroCellConfig& cfg,
                     RewardNormalizer& normalizer);

/// r + gamma * V(s') - V(s), with the bootstrap dropped on terminal steps.
double td_error(double r, double v_next, double v_now, double gamma, bool terminal);

struct Transition {
  std::vector<double> state;
  AgentAction action;
  double reward = 0.0;
  std::vector<double> next_state;
  bool terminal = false;
};

double critic_value(const CriticParams& critic, std::span<const double> encoded);

/// Semi-gradient of td^2 w.r.t. the critic parameters: -2 td dV(s)/dw.
nn::Gradient critic_gradient(const CriticParams& critic, std::span<const double> encoded,
                             double td);

/// One plain descent step on td^2. Throws DomainError on non-finite td.
CriticParams critic_update(const CriticParams& critic, const Transition& transition, double td,
                           double lr);

/// Gradient of td * log pi(a_n | s) for every head n, w.r.t. the trunk and
/// that head's parameters.
struct ActorGradients {
  std::vector<nn::Gradient> trunk;  // one trunk-shaped gradient per head
  std::vector<nn::Gradient> heads;
};

ActorGradients actor_gradients(const ActorParams& actor, std::span<const double> encoded,
                               const AgentAction& action, double td);

/// Head n ascends its own gradient; the trunk ascends the mean of the
/// per-head trunk gradients. Plain gradient ascent.
void actor_update(ActorParams& actor, const ActorGradients& grads, double lr_local,
                  double lr_global);

/// Deterministic policy: SBS n stays on iff p_n >= 0.5.
AgentAction act_greedy(const ActorParams& actor, std::span<const double> encoded);

/// Turns off-SBSs back on, largest load first, until the macro constraint holds.
SwitchVector repair(SwitchVector gamma, std::span<const double> loads, const MacroCellConfig& cfg,
                    const ProfileTable& profiles);

/// Load sequences the agent trains on. `observed` is what the agent sees
/// (predicted or measured); `realized` is what the network experiences.
struct Environment {
  std::vector<std::vector<double>> observed;  // [slot][bs]
  std::vector<std::vector<double>> realized;  // [slot][bs]
  MacroCellConfig cfg;
  ProfileTable profiles;
  std::size_t steps_per_episode = 144;

  std::size_t num_episodes_available() const;
  void validate() const;
};

struct Hyperparams {
  std::size_t episodes = 2000;
  double actor_lr = 0.01;   // shared by trunk and heads
  double critic_lr = 0.01;
  double gamma = 0.90;
  double exploration = 0.01;
  nn::Optimizer::Kind optimizer = nn::Optimizer::Kind::Adam;
  Architecture arch;

  void validate() const;
};

struct EpisodeLog {
  std::size_t episode = 0;
  double cum_reward = 0.0;
  double mean_p_saved = 0.0;
  std::size_t violations = 0;
  double min_reward = 0.0;
  double max_reward = 0.0;
};

struct TrainResult {
  ActorParams actor;
  CriticParams critic;
  std::vector<EpisodeLog> log;
  double p_saved_max = 0.0;
};

/// Episode m replays day (m mod available days). Deterministic per seed.
TrainResult train(const Environment& env, const Hyperparams& hp, std::uint64_t seed);

void write_training_log_csv(std::ostream& out, std::span<const EpisodeLog> log);

nn::Checkpoint to_checkpoint(const ActorParams& actor, const CriticParams& critic);
ActorParams actor_from_checkpoint(const nn::Checkpoint& ckpt);
CriticParams critic_from_checkpoint(const nn::Checkpoint& ckpt);

}  // namespace cellsleep::agent
