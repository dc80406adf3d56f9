#pragma once

// Mutual-information estimation between goal states and controllable states
// with the Donsker-Varadhan lower bound
//
//   I(G; C) >= E_joint[T] - log E_marginal[exp T]
//
// Marginal samples are built by permuting controllable states along the time
// axis of one trajectory. A two-state trajectory fraction {s_t, s_t+1} gives
// the per-transition intrinsic reward.

#include "misc/ndmath.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace misc {

/// Index partition of a flat state vector into controllable and goal parts.
/// Several goal groups are allowed; the intrinsic objective sums one MI term
/// per group.
struct StateSplit {
  std::vector<int> controllable;
  std::vector<std::vector<int>> goal_groups;

  /// Throws std::invalid_argument for out-of-range or duplicated indices, for
  /// a goal group that overlaps the controllable set, or for empty sets.
  void validate(int state_dim) const;

  std::size_t num_groups() const { return goal_groups.size(); }
  int controllable_dim() const { return static_cast<int>(controllable.size()); }
  int goal_dim(std::size_t group) const { return static_cast<int>(goal_groups.at(group).size()); }

  Vec controllable_of(const Vec& state) const;
  Vec goal_of(const Vec& state, std::size_t group) const;
};

struct TrajectoryFraction {
  Vec s_t;
  Vec s_next;
};

struct MiRewardConfig {
  double alpha = 5000.0;
  double clip_lo = 0.0;
  double clip_hi = 1.0;

  void validate() const;
};

struct StatisticsNetConfig {
  std::vector<int> hidden = {64, 64};
  AdamConfig adam{};
};

/// The statistics function T(goal, controllable) -> scalar, with its own
/// optimizer state. Input layout is goal ++ controllable.
class StatisticsNet {
 public:
  StatisticsNet() = default;
  StatisticsNet(int goal_dim, int controllable_dim, const StatisticsNetConfig& cfg, Rng& rng);

  int goal_dim() const { return goal_dim_; }
  int controllable_dim() const { return controllable_dim_; }

  /// Column k of the result scores (goal.col(k), ctrl.col(k)).
  Vec scores(const Mat& goal, const Mat& ctrl) const;
  double score(const Vec& goal, const Vec& ctrl) const;

  /// One Adam descent step on a loss whose derivative w.r.t. each score is
  /// given in `dloss_dscore`.
  void descend(const Mat& goal, const Mat& ctrl, const Vec& dloss_dscore);

  const Mlp& net() const { return net_; }
  Mlp& mutable_net() { return net_; }
  const AdamState& optimizer() const { return adam_; }
  AdamState& mutable_optimizer() { return adam_; }

 private:
  Mat stack(const Mat& goal, const Mat& ctrl) const;

  int goal_dim_ = 0;
  int controllable_dim_ = 0;
  Mlp net_;
  AdamState adam_;
};

/// mean(joint) - (logsumexp(marginal) - log n_marginal).
double dv_lower_bound(std::span<const double> joint_scores, std::span<const double> marginal_scores);

/// Non-identity permutation of 0..n-1: the swap for n == 2, otherwise a
/// uniform permutation redrawn until it moves at least one element.
std::vector<std::size_t> marginal_permutation(std::size_t n, Rng& rng);

/// Controllable states reordered by marginal_permutation.
std::vector<Vec> shuffle_marginal(std::span<const Vec> controllable_states, Rng& rng);

/// Unscaled per-fraction bound for one goal group:
///   0.5 * sum_i T(g_i, c_i) - log(0.5 * sum_i exp T(g_i, c_swap(i))),  i in {t, t+1}.
double transition_raw(const TrajectoryFraction& frac, const StateSplit& split, std::size_t group,
                      const StatisticsNet& net);
/// Same for a batch, one entry per fraction.
Vec transition_raw_batch(std::span<const TrajectoryFraction> fracs, const StateSplit& split,
                         std::size_t group, const StatisticsNet& net);

double scale_and_clip(double raw, const MiRewardConfig& cfg);

/// Intrinsic reward of one transition. `nets` holds one statistics network
/// per goal group; per-group raw values are summed, scaled by alpha and
/// clipped.
double transition_reward(const TrajectoryFraction& frac, const StateSplit& split,
                         std::span<const StatisticsNet> nets, const MiRewardConfig& cfg);
double transition_reward(const TrajectoryFraction& frac, const StateSplit& split,
                         const StatisticsNet& net, const MiRewardConfig& cfg);

/// DV bound over every state of a trajectory for one goal group, with
/// marginals from a within-trajectory shuffle. Unscaled, unclipped.
double trajectory_mi(std::span<const Vec> states, const StateSplit& split, std::size_t group,
                     const StatisticsNet& net, Rng& rng);

/// Per-fraction training objective.
///   kLinear:      mean_J T - mean_M exp(T). Decomposes over fractions and is
///                 maximised by T = log p_joint/p_marginal, where the DV bound
///                 is tight.
///   kLogMeanExp:  mean_J T - log mean_M exp(T) on each two-sample fraction.
///                 Unbounded above for correlated data (the two-sample
///                 log-mean-exp underestimates the log partition), so scores
///                 grow without limit; kept for comparison.
enum class SurrogateForm { kLinear, kLogMeanExp };

/// One gradient-ascent step on the mean per-fraction objective of `group`.
/// Returns the negated objective (before the step).
/// Throws DivergenceError when the loss is not finite.
double train_estimator(std::span<const TrajectoryFraction> fracs, const StateSplit& split,
                       std::size_t group, StatisticsNet& net,
                       SurrogateForm form = SurrogateForm::kLinear);

/// All statistics networks for a split plus the reward configuration.
/// Copies are independent snapshots.
class MiEstimator {
 public:
  MiEstimator() = default;
  MiEstimator(StateSplit split, int state_dim, MiRewardConfig reward_cfg,
              const StatisticsNetConfig& net_cfg, Rng& rng,
              SurrogateForm form = SurrogateForm::kLinear);

  const StateSplit& split() const { return split_; }
  const MiRewardConfig& reward_config() const { return reward_cfg_; }
  SurrogateForm form() const { return form_; }
  std::span<const StatisticsNet> nets() const { return nets_; }
  std::vector<StatisticsNet>& mutable_nets() { return nets_; }

  /// Sum over goal groups of transition_raw.
  double raw(const TrajectoryFraction& frac) const;
  Vec raw_batch(std::span<const TrajectoryFraction> fracs) const;
  double reward(const TrajectoryFraction& frac) const;
  /// Scaled and clipped rewards for a batch.
  Vec reward_batch(std::span<const TrajectoryFraction> fracs) const;
  /// Sum over goal groups of trajectory_mi.
  double trajectory_mi(std::span<const Vec> states, Rng& rng) const;
  /// One step per group; returns the summed loss.
  double train(std::span<const TrajectoryFraction> fracs);

 private:
  StateSplit split_;
  MiRewardConfig reward_cfg_;
  SurrogateForm form_ = SurrogateForm::kLinear;
  std::vector<StatisticsNet> nets_;
};

struct PairEstimatorConfig {
  int steps = 3000;
  int batch_size = 256;
  double holdout_fraction = 0.1;
  int eval_shuffles = 16;
  bool standardize = true;
  StatisticsNetConfig net{{64, 64}, AdamConfig{3e-4}};
  std::uint64_t seed = 0;
};

struct PairEstimate {
  double heldout = 0.0;   // DV bound on held-out pairs
  double train = 0.0;     // DV bound on training pairs, same protocol
  std::size_t n_train = 0;
  std::size_t n_heldout = 0;
};

/// Trains a fresh statistics network on the pairs (xs[i], ys[i]) and returns
/// its held-out DV estimate in nats. Marginals pair ys[i] with a shuffled x.
/// When `groups` is non-empty it labels each pair (e.g. with its trajectory)
/// and marginals are only drawn within a label; the held-out split is then
/// made by label.
PairEstimate estimate_mi_pairs_detailed(std::span<const Vec> xs, std::span<const Vec> ys,
                                        const PairEstimatorConfig& cfg,
                                        std::span<const int> groups = {});

double estimate_mi_pairs(std::span<const Vec> xs, std::span<const Vec> ys,
                         const PairEstimatorConfig& cfg, std::span<const int> groups = {});

}  // namespace misc
