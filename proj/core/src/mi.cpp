#include "misc/mi.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <string>

namespace misc {

namespace {

void check_fraction(const TrajectoryFraction& frac) {
  if (frac.s_t.size() != frac.s_next.size()) {
    throw DimensionError("trajectory fraction: s_t has " + std::to_string(frac.s_t.size()) +
                         " entries but s_next has " + std::to_string(frac.s_next.size()));
  }
}

double mean_of(const Vec& v) { return v.size() == 0 ? 0.0 : v.mean(); }

// d(mean(joint) - logmeanexp(marginal)) / d(marginal_k) = softmax_k.
Vec softmax(const Vec& v) {
  const double m = v.maxCoeff();
  Vec e = (v.array() - m).exp().matrix();
  return e / e.sum();
}

}  // namespace

// ---------------------------------------------------------- StateSplit

void StateSplit::validate(int state_dim) const {
  auto check_set = [state_dim](const std::vector<int>& idx, const std::string& what) {
    if (idx.empty()) throw std::invalid_argument("state split: " + what + " is empty");
    std::set<int> seen;
    for (int i : idx) {
      if (i < 0 || i >= state_dim) {
        throw std::invalid_argument("state split: " + what + " index " + std::to_string(i) +
                                    " outside state of dimension " + std::to_string(state_dim));
      }
      if (!seen.insert(i).second) {
        throw std::invalid_argument("state split: " + what + " repeats index " + std::to_string(i));
      }
    }
    return seen;
  };
  const auto ctrl = check_set(controllable, "controllable set");
  if (goal_groups.empty()) throw std::invalid_argument("state split: no goal groups");
  for (std::size_t g = 0; g < goal_groups.size(); ++g) {
    const auto goal = check_set(goal_groups[g], "goal group " + std::to_string(g));
    for (int i : goal) {
      if (ctrl.contains(i)) {
        throw std::invalid_argument("state split: index " + std::to_string(i) +
                                    " is both controllable and in goal group " +
                                    std::to_string(g));
      }
    }
  }
}

Vec StateSplit::controllable_of(const Vec& state) const {
  Vec out(controllable.size());
  for (std::size_t k = 0; k < controllable.size(); ++k) out(k) = state(controllable[k]);
  return out;
}

Vec StateSplit::goal_of(const Vec& state, std::size_t group) const {
  const auto& idx = goal_groups.at(group);
  Vec out(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) out(k) = state(idx[k]);
  return out;
}

void MiRewardConfig::validate() const {
  if (!(alpha > 0.0)) throw std::invalid_argument("mi reward: alpha must be positive");
  if (!(clip_lo < clip_hi)) throw std::invalid_argument("mi reward: clip_lo must be below clip_hi");
}

// ------------------------------------------------------- StatisticsNet

StatisticsNet::StatisticsNet(int goal_dim, int controllable_dim, const StatisticsNetConfig& cfg,
                             Rng& rng)
    : goal_dim_(goal_dim), controllable_dim_(controllable_dim) {
  MlpSpec spec;
  spec.input_dim = goal_dim + controllable_dim;
  spec.hidden = cfg.hidden;
  spec.output_dim = 1;
  net_ = Mlp::create(spec, rng);
  adam_ = AdamState(net_, cfg.adam);
}

Mat StatisticsNet::stack(const Mat& goal, const Mat& ctrl) const {
  if (goal.rows() != goal_dim_ || ctrl.rows() != controllable_dim_ || goal.cols() != ctrl.cols()) {
    throw DimensionError("statistics net expects goal " + std::to_string(goal_dim_) +
                         " and controllable " + std::to_string(controllable_dim_) +
                         " rows, got " + shape_str(goal.rows(), goal.cols()) + " and " +
                         shape_str(ctrl.rows(), ctrl.cols()));
  }
  Mat in(goal_dim_ + controllable_dim_, goal.cols());
  in.topRows(goal_dim_) = goal;
  in.bottomRows(controllable_dim_) = ctrl;
  return in;
}

Vec StatisticsNet::scores(const Mat& goal, const Mat& ctrl) const {
  return net_.forward(stack(goal, ctrl)).row(0).transpose();
}

double StatisticsNet::score(const Vec& goal, const Vec& ctrl) const {
  return scores(Mat(goal), Mat(ctrl))(0);
}

void StatisticsNet::descend(const Mat& goal, const Mat& ctrl, const Vec& dloss_dscore) {
  ForwardCache cache;
  net_.forward(stack(goal, ctrl), &cache);
  const Backprop bp = net_.backward(cache, dloss_dscore.transpose());
  adam_step(net_, bp.params, adam_);
}

// ---------------------------------------------------------- estimators

double dv_lower_bound(std::span<const double> joint_scores, std::span<const double> marginal_scores) {
  if (joint_scores.empty() || marginal_scores.empty()) {
    throw std::invalid_argument("dv_lower_bound: empty score vector");
  }
  double sum = 0.0;
  for (double s : joint_scores) {
    if (!std::isfinite(s)) throw NumericError("dv_lower_bound: non-finite joint score");
    sum += s;
  }
  const double joint_mean = sum / static_cast<double>(joint_scores.size());
  return joint_mean -
         (logsumexp(marginal_scores) - std::log(static_cast<double>(marginal_scores.size())));
}

std::vector<std::size_t> marginal_permutation(std::size_t n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("marginal shuffle needs at least two states");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (n == 2) {
    std::swap(perm[0], perm[1]);
    return perm;
  }
  auto is_identity = [&] {
    for (std::size_t i = 0; i < n; ++i) {
      if (perm[i] != i) return false;
    }
    return true;
  };
  do {
    rng.shuffle(perm.begin(), perm.end());
  } while (is_identity());
  return perm;
}

std::vector<Vec> shuffle_marginal(std::span<const Vec> controllable_states, Rng& rng) {
  const auto perm = marginal_permutation(controllable_states.size(), rng);
  std::vector<Vec> out;
  out.reserve(perm.size());
  for (std::size_t i : perm) out.push_back(controllable_states[i]);
  return out;
}

Vec transition_raw_batch(std::span<const TrajectoryFraction> fracs, const StateSplit& split,
                         std::size_t group, const StatisticsNet& net) {
  const auto n = static_cast<Eigen::Index>(fracs.size());
  if (n == 0) return Vec();
  const int gd = split.goal_dim(group);
  const int cd = split.controllable_dim();
  // Columns: [joint t | joint t+1 | (g_t, c_t+1) | (g_t+1, c_t)] blocks of n.
  Mat goal(gd, 4 * n);
  Mat ctrl(cd, 4 * n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& f = fracs[k];
    check_fraction(f);
    const Vec g0 = split.goal_of(f.s_t, group);
    const Vec g1 = split.goal_of(f.s_next, group);
    const Vec c0 = split.controllable_of(f.s_t);
    const Vec c1 = split.controllable_of(f.s_next);
    goal.col(k) = g0;
    ctrl.col(k) = c0;
    goal.col(n + k) = g1;
    ctrl.col(n + k) = c1;
    goal.col(2 * n + k) = g0;
    ctrl.col(2 * n + k) = c1;
    goal.col(3 * n + k) = g1;
    ctrl.col(3 * n + k) = c0;
  }
  const Vec s = net.scores(goal, ctrl);
  Vec raw(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double joint[2] = {s(k), s(n + k)};
    const double marg[2] = {s(2 * n + k), s(3 * n + k)};
    raw(k) = dv_lower_bound(joint, marg);
  }
  return raw;
}

double transition_raw(const TrajectoryFraction& frac, const StateSplit& split, std::size_t group,
                      const StatisticsNet& net) {
  return transition_raw_batch(std::span(&frac, 1), split, group, net)(0);
}

double scale_and_clip(double raw, const MiRewardConfig& cfg) {
  return std::clamp(cfg.alpha * raw, cfg.clip_lo, cfg.clip_hi);
}

double transition_reward(const TrajectoryFraction& frac, const StateSplit& split,
                         std::span<const StatisticsNet> nets, const MiRewardConfig& cfg) {
  if (nets.size() != split.num_groups()) {
    throw std::invalid_argument("transition_reward: " + std::to_string(nets.size()) +
                                " statistics nets for " + std::to_string(split.num_groups()) +
                                " goal groups");
  }
  split.validate(static_cast<int>(frac.s_t.size()));
  double raw = 0.0;
  for (std::size_t g = 0; g < nets.size(); ++g) raw += transition_raw(frac, split, g, nets[g]);
  return scale_and_clip(raw, cfg);
}

double transition_reward(const TrajectoryFraction& frac, const StateSplit& split,
                         const StatisticsNet& net, const MiRewardConfig& cfg) {
  return transition_reward(frac, split, std::span(&net, 1), cfg);
}

double trajectory_mi(std::span<const Vec> states, const StateSplit& split, std::size_t group,
                     const StatisticsNet& net, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(states.size());
  if (n < 2) throw std::invalid_argument("trajectory_mi: trajectory needs at least two states");
  const int gd = split.goal_dim(group);
  const int cd = split.controllable_dim();
  Mat goal(gd, n);
  Mat ctrl(cd, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    goal.col(i) = split.goal_of(states[i], group);
    ctrl.col(i) = split.controllable_of(states[i]);
  }
  const auto perm = marginal_permutation(static_cast<std::size_t>(n), rng);
  Mat shuffled(cd, n);
  for (Eigen::Index i = 0; i < n; ++i) shuffled.col(i) = ctrl.col(static_cast<Eigen::Index>(perm[i]));
  const Vec joint = net.scores(goal, ctrl);
  const Vec marg = net.scores(goal, shuffled);
  return dv_lower_bound(std::span(joint.data(), joint.size()), std::span(marg.data(), marg.size()));
}

double train_estimator(std::span<const TrajectoryFraction> fracs, const StateSplit& split,
                       std::size_t group, StatisticsNet& net, SurrogateForm form) {
  const auto n = static_cast<Eigen::Index>(fracs.size());
  if (n == 0) throw std::invalid_argument("train_estimator: empty batch");
  const int gd = split.goal_dim(group);
  const int cd = split.controllable_dim();
  Mat goal(gd, 4 * n);
  Mat ctrl(cd, 4 * n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& f = fracs[k];
    check_fraction(f);
    const Vec g0 = split.goal_of(f.s_t, group);
    const Vec g1 = split.goal_of(f.s_next, group);
    const Vec c0 = split.controllable_of(f.s_t);
    const Vec c1 = split.controllable_of(f.s_next);
    goal.col(4 * k) = g0;
    ctrl.col(4 * k) = c0;
    goal.col(4 * k + 1) = g1;
    ctrl.col(4 * k + 1) = c1;
    goal.col(4 * k + 2) = g0;
    ctrl.col(4 * k + 2) = c1;
    goal.col(4 * k + 3) = g1;
    ctrl.col(4 * k + 3) = c0;
  }
  const Vec s = net.scores(goal, ctrl);
  const double inv_n = 1.0 / static_cast<double>(n);
  double objective = 0.0;
  Vec dloss(4 * n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double a = s(4 * k + 2);
    const double b = s(4 * k + 3);
    dloss(4 * k) = -0.5 * inv_n;
    dloss(4 * k + 1) = -0.5 * inv_n;
    const double joint = 0.5 * (s(4 * k) + s(4 * k + 1));
    if (form == SurrogateForm::kLinear) {
      const double ea = std::exp(a);
      const double eb = std::exp(b);
      objective += joint - 0.5 * (ea + eb);
      dloss(4 * k + 2) = 0.5 * inv_n * ea;
      dloss(4 * k + 3) = 0.5 * inv_n * eb;
    } else {
      const double m = std::max(a, b);
      const double ea = std::exp(a - m);
      const double eb = std::exp(b - m);
      objective += joint - (m + std::log(0.5 * (ea + eb)));
      dloss(4 * k + 2) = inv_n * ea / (ea + eb);
      dloss(4 * k + 3) = inv_n * eb / (ea + eb);
    }
  }
  const double loss = -objective * inv_n;
  if (!std::isfinite(loss)) {
    throw DivergenceError("train_estimator: non-finite loss for goal group " + std::to_string(group));
  }
  net.descend(goal, ctrl, dloss);
  return loss;
}

// --------------------------------------------------------- MiEstimator

MiEstimator::MiEstimator(StateSplit split, int state_dim, MiRewardConfig reward_cfg,
                         const StatisticsNetConfig& net_cfg, Rng& rng, SurrogateForm form)
    : split_(std::move(split)), reward_cfg_(reward_cfg), form_(form) {
  split_.validate(state_dim);
  reward_cfg_.validate();
  for (std::size_t g = 0; g < split_.num_groups(); ++g) {
    nets_.emplace_back(split_.goal_dim(g), split_.controllable_dim(), net_cfg, rng);
  }
}

double MiEstimator::raw(const TrajectoryFraction& frac) const {
  double r = 0.0;
  for (std::size_t g = 0; g < nets_.size(); ++g) r += transition_raw(frac, split_, g, nets_[g]);
  return r;
}

Vec MiEstimator::raw_batch(std::span<const TrajectoryFraction> fracs) const {
  Vec r = Vec::Zero(static_cast<Eigen::Index>(fracs.size()));
  for (std::size_t g = 0; g < nets_.size(); ++g) r += transition_raw_batch(fracs, split_, g, nets_[g]);
  return r;
}

double MiEstimator::reward(const TrajectoryFraction& frac) const {
  return scale_and_clip(raw(frac), reward_cfg_);
}

Vec MiEstimator::reward_batch(std::span<const TrajectoryFraction> fracs) const {
  Vec r = raw_batch(fracs);
  for (Eigen::Index k = 0; k < r.size(); ++k) r(k) = scale_and_clip(r(k), reward_cfg_);
  return r;
}

double MiEstimator::trajectory_mi(std::span<const Vec> states, Rng& rng) const {
  double total = 0.0;
  for (std::size_t g = 0; g < nets_.size(); ++g) {
    total += misc::trajectory_mi(states, split_, g, nets_[g], rng);
  }
  return total;
}

double MiEstimator::train(std::span<const TrajectoryFraction> fracs) {
  double loss = 0.0;
  for (std::size_t g = 0; g < nets_.size(); ++g) loss += train_estimator(fracs, split_, g, nets_[g], form_);
  return loss;
}

// ------------------------------------------------------- pair estimator

namespace {

struct Standardizer {
  Vec mean;
  Vec scale;

  static Standardizer fit(std::span<const Vec> rows, std::span<const std::size_t> idx, bool enabled) {
    const auto d = rows.front().size();
    Standardizer s{Vec::Zero(d), Vec::Ones(d)};
    if (!enabled) return s;
    for (std::size_t i : idx) s.mean += rows[i];
    s.mean /= static_cast<double>(idx.size());
    Vec var = Vec::Zero(d);
    for (std::size_t i : idx) var += (rows[i] - s.mean).cwiseAbs2();
    var /= static_cast<double>(idx.size());
    for (Eigen::Index k = 0; k < d; ++k) {
      const double sd = std::sqrt(var(k));
      s.scale(k) = sd > 1e-12 ? sd : 1.0;
    }
    return s;
  }

  Mat apply(std::span<const Vec> rows) const {
    Mat out(mean.size(), static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.col(static_cast<Eigen::Index>(i)) = (rows[i] - mean).cwiseQuotient(scale);
    }
    return out;
  }
};

// Draws marginal partners: uniformly from `pool`, or within the same label.
class PartnerSampler {
 public:
  PartnerSampler(std::span<const std::size_t> pool, std::span<const int> groups)
      : pool_(pool.begin(), pool.end()), grouped_(!groups.empty()) {
    if (grouped_) {
      for (std::size_t i : pool_) members_[groups[i]].push_back(i);
      labels_ = groups;
    }
  }

  std::size_t partner(std::size_t i, Rng& rng) const {
    if (!grouped_) return pool_[rng.index(pool_.size())];
    const auto& m = members_.at(labels_[i]);
    return m[rng.index(m.size())];
  }

  // A permutation of `pool_` (within labels when grouped).
  std::vector<std::size_t> permutation(Rng& rng) const {
    std::vector<std::size_t> out(pool_.size());
    if (!grouped_) {
      std::vector<std::size_t> p = pool_;
      rng.shuffle(p.begin(), p.end());
      return p;
    }
    std::map<int, std::vector<std::size_t>> shuffled = members_;
    for (auto& [label, m] : shuffled) rng.shuffle(m.begin(), m.end());
    std::map<int, std::size_t> cursor;
    for (std::size_t k = 0; k < pool_.size(); ++k) {
      const int label = labels_[pool_[k]];
      out[k] = shuffled[label][cursor[label]++];
    }
    return out;
  }

 private:
  std::vector<std::size_t> pool_;
  bool grouped_;
  std::map<int, std::vector<std::size_t>> members_;
  std::span<const int> labels_;
};

double evaluate_pairs(const StatisticsNet& net, const Mat& x, const Mat& y,
                      std::span<const std::size_t> idx, const PartnerSampler& sampler,
                      int shuffles, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(idx.size());
  Mat goal(y.rows(), n);
  Mat ctrl(x.rows(), n);
  for (Eigen::Index k = 0; k < n; ++k) {
    goal.col(k) = y.col(static_cast<Eigen::Index>(idx[k]));
    ctrl.col(k) = x.col(static_cast<Eigen::Index>(idx[k]));
  }
  const Vec joint = net.scores(goal, ctrl);
  std::vector<double> marg;
  marg.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(shuffles));
  for (int r = 0; r < shuffles; ++r) {
    const auto perm = sampler.permutation(rng);
    Mat shuffled(x.rows(), n);
    for (Eigen::Index k = 0; k < n; ++k) shuffled.col(k) = x.col(static_cast<Eigen::Index>(perm[k]));
    const Vec m = net.scores(goal, shuffled);
    marg.insert(marg.end(), m.data(), m.data() + m.size());
  }
  return dv_lower_bound(std::span(joint.data(), joint.size()), marg);
}

}  // namespace

PairEstimate estimate_mi_pairs_detailed(std::span<const Vec> xs, std::span<const Vec> ys,
                                        const PairEstimatorConfig& cfg, std::span<const int> groups) {
  if (xs.size() != ys.size()) {
    throw DimensionError("estimate_mi_pairs: " + std::to_string(xs.size()) + " x rows but " +
                         std::to_string(ys.size()) + " y rows");
  }
  if (xs.size() < 100) {
    throw std::invalid_argument("estimate_mi_pairs: need at least 100 pairs, got " +
                                std::to_string(xs.size()));
  }
  if (!groups.empty() && groups.size() != xs.size()) {
    throw DimensionError("estimate_mi_pairs: group labels do not match pair count");
  }
  if (cfg.steps < 0 || cfg.batch_size <= 0 || cfg.eval_shuffles <= 0 ||
      !(cfg.holdout_fraction > 0.0 && cfg.holdout_fraction < 1.0)) {
    throw std::invalid_argument("estimate_mi_pairs: invalid budget");
  }
  const auto dx = xs.front().size();
  const auto dy = ys.front().size();
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].size() != dx || ys[i].size() != dy) {
      throw DimensionError("estimate_mi_pairs: ragged rows at index " + std::to_string(i));
    }
    if (!xs[i].allFinite() || !ys[i].allFinite()) {
      throw NumericError("estimate_mi_pairs: non-finite value at row " + std::to_string(i));
    }
  }

  Rng rng(cfg.seed);
  const std::size_t n = xs.size();
  const auto n_hold_target = static_cast<std::size_t>(std::ceil(cfg.holdout_fraction * n));
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> hold_idx;
  if (groups.empty()) {
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    rng.shuffle(all.begin(), all.end());
    hold_idx.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_hold_target));
    train_idx.assign(all.begin() + static_cast<std::ptrdiff_t>(n_hold_target), all.end());
  } else {
    std::map<int, std::vector<std::size_t>> by_label;
    for (std::size_t i = 0; i < n; ++i) by_label[groups[i]].push_back(i);
    std::vector<int> labels;
    for (const auto& [label, members] : by_label) labels.push_back(label);
    rng.shuffle(labels.begin(), labels.end());
    for (int label : labels) {
      auto& dst = hold_idx.size() < n_hold_target ? hold_idx : train_idx;
      const auto& m = by_label[label];
      dst.insert(dst.end(), m.begin(), m.end());
    }
  }
  if (hold_idx.size() < 2 || train_idx.size() < 2) {
    throw std::invalid_argument("estimate_mi_pairs: not enough data for a held-out split");
  }
  std::sort(hold_idx.begin(), hold_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  const auto xs_norm = Standardizer::fit(xs, train_idx, cfg.standardize);
  const auto ys_norm = Standardizer::fit(ys, train_idx, cfg.standardize);
  const Mat x = xs_norm.apply(xs);
  const Mat y = ys_norm.apply(ys);

  Rng init_rng = rng.fork();
  StatisticsNet net(static_cast<int>(dy), static_cast<int>(dx), cfg.net, init_rng);
  const PartnerSampler train_sampler(train_idx, groups);
  const PartnerSampler hold_sampler(hold_idx, groups);

  const Eigen::Index b = cfg.batch_size;
  Mat goal(dy, 2 * b);
  Mat ctrl(dx, 2 * b);
  Vec dloss(2 * b);
  const double log_b = std::log(static_cast<double>(b));
  for (int step = 0; step < cfg.steps; ++step) {
    for (Eigen::Index k = 0; k < b; ++k) {
      const std::size_t i = train_idx[rng.index(train_idx.size())];
      const std::size_t j = train_sampler.partner(i, rng);
      goal.col(k) = y.col(static_cast<Eigen::Index>(i));
      ctrl.col(k) = x.col(static_cast<Eigen::Index>(i));
      goal.col(b + k) = y.col(static_cast<Eigen::Index>(i));
      ctrl.col(b + k) = x.col(static_cast<Eigen::Index>(j));
    }
    const Vec s = net.scores(goal, ctrl);
    const Vec marg = s.tail(b);
    const double m = marg.maxCoeff();
    const double lme = m + std::log((marg.array() - m).exp().sum()) - log_b;
    const double objective = mean_of(s.head(b)) - lme;
    if (!std::isfinite(objective)) {
      throw DivergenceError("estimate_mi_pairs: non-finite objective at step " + std::to_string(step));
    }
    dloss.head(b).setConstant(-1.0 / static_cast<double>(b));
    dloss.tail(b) = softmax(marg);
    net.descend(goal, ctrl, dloss);
  }

  PairEstimate out;
  out.n_train = train_idx.size();
  out.n_heldout = hold_idx.size();
  Rng eval_rng = rng.fork();
  out.heldout = evaluate_pairs(net, x, y, hold_idx, hold_sampler, cfg.eval_shuffles, eval_rng);
  out.train = evaluate_pairs(net, x, y, train_idx, train_sampler, 1, eval_rng);
  return out;
}

double estimate_mi_pairs(std::span<const Vec> xs, std::span<const Vec> ys,
                         const PairEstimatorConfig& cfg, std::span<const int> groups) {
  return estimate_mi_pairs_detailed(xs, ys, cfg, groups).heldout;
}

}  // namespace misc
