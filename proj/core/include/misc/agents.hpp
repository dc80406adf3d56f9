#pragma once

// Off-policy learners (DDPG, SAC) and the training loop that couples them
// with the MI estimator:
//
//   rollout with exploration -> store trajectory -> sample batch ->
//   resolve rewards per variant -> policy update -> estimator update
//
// Networks work in normalised action units [-1, 1]; the environment sees
// actions scaled by its max_action.

#include "misc/envs.hpp"
#include "misc/metrics.hpp"
#include "misc/mi.hpp"
#include "misc/ndmath.hpp"
#include "misc/replay.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace misc {

enum class Algo { kDdpg, kSac };
enum class Variant { kIntrinsicOnly, kMiscF, kMiscR, kMiscP, kTaskOnly };

std::string_view to_string(Algo algo);
std::string_view to_string(Variant variant);
/// "ddpg" | "sac".
Algo algo_from_string(std::string_view name);
/// "intrinsic-only" | "misc-f" | "misc-r" | "misc-p" | "task-only"
/// (underscores accepted in place of dashes).
Variant variant_from_string(std::string_view name);

struct ExplorationConfig {
  double random_action_prob = 0.3;
  double noise_scale = 0.2;  // fraction of the action half-width
};

struct VariantConfig {
  Variant variant = Variant::kIntrinsicOnly;
  double misc_r_weight = 1.0;  // beta in r_task + beta * r_mi
  int pretrain_epochs = 50;    // misc-f intrinsic phase
  ExplorationConfig exploration{};
  double action_l2 = 1.0;
  int batch_size = 128;
  double gamma = 0.98;
  double sac_temperature = 0.2;

  void validate() const;
};

struct LearnerConfig {
  Algo algo = Algo::kDdpg;
  std::vector<int> hidden = {64, 64};
  double actor_lr = 1e-3;
  double critic_lr = 1e-3;
  double polyak = 0.95;  // target retention weight
  double obs_clip = 200.0;
};

/// Deterministic policy (DDPG: tanh output) or squashed Gaussian (SAC: mean
/// and log-std heads).
struct Actor {
  Actor() = default;
  Actor(int obs_dim, int act_dim, double max_action, bool stochastic, const LearnerConfig& cfg,
        Rng& rng);

  Mlp net;
  AdamState adam;
  int act_dim = 0;
  double max_action = 1.0;
  bool stochastic = false;

  /// Deterministic action in normalised units, act_dim x batch.
  Mat mean_action(const Mat& obs) const;
};

struct Critic {
  Critic() = default;
  Critic(int obs_dim, int act_dim, const LearnerConfig& cfg, Rng& rng);

  Mlp net;     // obs ++ action -> Q
  Mlp target;  // polyak-averaged copy
  AdamState adam;

  Vec q(const Mat& obs, const Mat& action) const;
  Vec q_target(const Mat& obs, const Mat& action) const;
};

struct AgentNetworks {
  Algo algo = Algo::kDdpg;
  Actor actor;
  Mlp actor_target;  // DDPG only
  std::vector<Critic> critics;  // one for DDPG, twin for SAC

  static AgentNetworks create(Algo algo, int obs_dim, int act_dim, double max_action,
                              const LearnerConfig& cfg, Rng& rng);
};

/// A training batch with rewards already resolved. Actions are normalised.
struct Batch {
  Mat obs;
  Mat action;
  Vec reward;
  Mat next_obs;
  Vec done;  // 1.0 for terminal transitions

  Eigen::Index size() const { return reward.size(); }
};

struct UpdateConfig {
  double gamma = 0.98;
  double polyak = 0.95;
  double action_l2 = 1.0;
  double sac_temperature = 0.2;
  // Range of the resolved rewards; targets are clipped to [lo, hi] / (1 - gamma).
  double reward_min = 0.0;
  double reward_max = 1.0;
};

struct UpdateLosses {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double max_abs_target = 0.0;
};

struct ActionSample {
  Vec action;  // environment units
  bool random = false;  // drawn uniformly from the box
};

/// Exploring: with probability random_action_prob a uniform action in the
/// box, otherwise the policy action (sampled for SAC) plus Gaussian noise of
/// noise_scale * max_action, clipped to the box. Not exploring: the
/// deterministic policy mean.
ActionSample select_action(const Actor& actor, const Vec& obs, bool explore,
                           const ExplorationConfig& cfg, Rng& rng, double obs_clip = 200.0);

/// Critic regression to r + gamma (1 - done) Q'(s', pi'(s')), actor ascent on
/// Q(s, pi(s)) - action_l2 |pi(s)|^2, then Polyak target updates.
UpdateLosses ddpg_update(const Batch& batch, AgentNetworks& nets, const UpdateConfig& cfg);

/// Twin-critic soft actor-critic with a fixed temperature. `rng` draws the
/// reparameterisation noise.
UpdateLosses sac_update(const Batch& batch, AgentNetworks& nets, const UpdateConfig& cfg, Rng& rng);

/// Loss and parameter gradient of the DDPG actor objective (exposed for
/// gradient checks).
struct ActorGradient {
  double loss = 0.0;
  MlpGrads grads;
};
ActorGradient ddpg_actor_gradient(const AgentNetworks& nets, const Mat& obs, double action_l2);
/// SAC actor objective mean(alpha log pi(u|s) - min_k Q_k(s, u)) with the
/// reparameterisation noise `eps` (act_dim x batch) held fixed.
ActorGradient sac_actor_gradient(const AgentNetworks& nets, const Mat& obs, const Mat& eps,
                                 double temperature);

/// Squashed Gaussian sample u = tanh(mu + sigma * eps) with its log density
/// in normalised action units.
struct SquashedSample {
  Mat action;   // act_dim x batch
  Vec log_prob; // batch
};
SquashedSample squashed_gaussian(const Mat& mean, const Mat& log_std, const Mat& eps);
/// Log density of tanh(N(mean, exp(log_std)^2)) at u in (-1, 1), one dimension.
double squashed_gaussian_log_prob(double u, double mean, double log_std);

/// SAC soft target r + gamma (1 - done)(min_k Q'_k(s', u') - alpha log pi(u'|s'))
/// for a given next-action sample (exposed for tests).
Vec sac_targets(const Batch& batch, const AgentNetworks& nets, const SquashedSample& next,
                double gamma, double temperature);

struct TrainingConfig {
  VariantConfig variant{};
  LearnerConfig learner{};
  MiRewardConfig mi_reward{};
  StatisticsNetConfig estimator{};
  ReplayConfig replay{};
  int epochs = 10;
  int cycles_per_epoch = 10;
  int batches_per_cycle = 40;
  int rollouts_per_cycle = 2;
  int test_rollouts = 10;
  int workers = 1;
  std::uint64_t seed = 0;
  bool record_wall_time = false;
  /// When false the statistics networks stay frozen at their initial weights.
  bool train_estimator = true;

  void validate() const;
};

struct EvalStats {
  int episodes = 0;
  double success_mean = 0.0;
  double success_std = 0.0;
  double displacement_mean = 0.0;  // net object displacement per episode
  double displacement_std = 0.0;
};

/// Runs deterministic-policy episodes. Episode success means the object
/// reached the goal radius at some step.
EvalStats evaluate_policy(const Env& env, const Actor& actor, int episodes, Rng& rng,
                          double obs_clip = 200.0);
/// Same protocol with uniformly random actions.
EvalStats evaluate_random_policy(const Env& env, int episodes, Rng& rng);

/// Everything the learner owns; checkpoints serialise this.
struct TrainingState {
  AgentNetworks nets;
  MiEstimator estimator;
  int epoch = 0;  // epochs completed
};

struct TrainingHooks {
  /// Called after every completed epoch with the new metrics row.
  std::function<void(const MetricsRow&, const TrainingState&)> on_epoch;
  /// Called once before the first epoch (only when epochs > 0).
  std::function<void(const TrainingState&)> on_start;
  /// Called with each batch's resolved rewards (tests).
  std::function<void(const Batch&, std::span<const SampledTransition>, const TrainingState&)> on_batch;
};

struct TrainingResult {
  MetricsLog log;
  TrainingState state;
};

/// Executes the full training loop on clones of `env`.
TrainingResult run_training(const Env& env, const TrainingConfig& cfg, const StateSplit& split,
                            const TrainingHooks& hooks = {});

}  // namespace misc
