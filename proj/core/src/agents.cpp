#include "misc/agents.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numbers>
#include <string>

namespace misc {

namespace {

constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;
// Per-dimension bound on |log pi| used when clipping soft targets.
constexpr double kEntropyBound = 10.0;

Mat stack_rows(const Mat& top, const Mat& bottom) {
  Mat out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

Mat clip_obs(const Mat& obs, double clip) { return obs.cwiseMax(-clip).cwiseMin(clip); }

// log(1 - tanh(z)^2) without cancellation.
double log1m_tanh2(double z) {
  const double x = -2.0 * z;
  const double softplus = x > 30.0 ? x : std::log1p(std::exp(x));
  return 2.0 * (std::numbers::ln2 - z - softplus);
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DivergenceError(std::string(what) + " is not finite");
}

double mean_std(const std::vector<double>& v, double* stddev) {
  if (v.empty()) {
    *stddev = 0.0;
    return 0.0;
  }
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  *stddev = std::sqrt(s / static_cast<double>(v.size()));
  return m;
}

}  // namespace

std::string_view to_string(Algo algo) { return algo == Algo::kDdpg ? "ddpg" : "sac"; }

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::kIntrinsicOnly:
      return "intrinsic-only";
    case Variant::kMiscF:
      return "misc-f";
    case Variant::kMiscR:
      return "misc-r";
    case Variant::kMiscP:
      return "misc-p";
    case Variant::kTaskOnly:
      return "task-only";
  }
  return "task-only";
}

Algo algo_from_string(std::string_view name) {
  if (name == "ddpg") return Algo::kDdpg;
  if (name == "sac") return Algo::kSac;
  throw std::invalid_argument("unknown algorithm '" + std::string(name) + "' (ddpg|sac)");
}

Variant variant_from_string(std::string_view name) {
  std::string n(name);
  std::replace(n.begin(), n.end(), '_', '-');
  for (Variant v : {Variant::kIntrinsicOnly, Variant::kMiscF, Variant::kMiscR, Variant::kMiscP,
                    Variant::kTaskOnly}) {
    if (n == to_string(v)) return v;
  }
  throw std::invalid_argument("unknown variant '" + std::string(name) +
                              "' (intrinsic-only|misc-f|misc-r|misc-p|task-only)");
}

void VariantConfig::validate() const {
  if (!(misc_r_weight >= 0.0)) throw std::invalid_argument("misc_r_weight must be >= 0");
  if (pretrain_epochs < 0) throw std::invalid_argument("pretrain_epochs must be >= 0");
  const auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(exploration.random_action_prob)) {
    throw std::invalid_argument("random_action_prob must lie in [0, 1]");
  }
  if (!(exploration.noise_scale >= 0.0)) throw std::invalid_argument("noise_scale must be >= 0");
  if (!(action_l2 >= 0.0)) throw std::invalid_argument("action_l2 must be >= 0");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
  if (!(sac_temperature >= 0.0)) throw std::invalid_argument("sac_temperature must be >= 0");
}

// ------------------------------------------------------------ networks

Actor::Actor(int obs_dim, int act_dim_in, double max_action_in, bool stochastic_in,
             const LearnerConfig& cfg, Rng& rng)
    : act_dim(act_dim_in), max_action(max_action_in), stochastic(stochastic_in) {
  MlpSpec spec;
  spec.input_dim = obs_dim;
  spec.hidden = cfg.hidden;
  spec.output_dim = stochastic ? 2 * act_dim : act_dim;
  spec.output_activation = stochastic ? Activation::kIdentity : Activation::kTanh;
  net = Mlp::create(spec, rng);
  adam = AdamState(net, AdamConfig{cfg.actor_lr});
}

Mat Actor::mean_action(const Mat& obs) const {
  Mat out = net.forward(obs);
  if (!stochastic) return out;
  return out.topRows(act_dim).array().tanh().matrix();
}

Critic::Critic(int obs_dim, int act_dim, const LearnerConfig& cfg, Rng& rng) {
  MlpSpec spec;
  spec.input_dim = obs_dim + act_dim;
  spec.hidden = cfg.hidden;
  spec.output_dim = 1;
  spec.output_init_scale = 3e-3;
  net = Mlp::create(spec, rng);
  target = net;
  adam = AdamState(net, AdamConfig{cfg.critic_lr});
}

Vec Critic::q(const Mat& obs, const Mat& action) const {
  return net.forward(stack_rows(obs, action)).row(0).transpose();
}

Vec Critic::q_target(const Mat& obs, const Mat& action) const {
  return target.forward(stack_rows(obs, action)).row(0).transpose();
}

AgentNetworks AgentNetworks::create(Algo algo, int obs_dim, int act_dim, double max_action,
                                    const LearnerConfig& cfg, Rng& rng) {
  AgentNetworks nets;
  nets.algo = algo;
  nets.actor = Actor(obs_dim, act_dim, max_action, algo == Algo::kSac, cfg, rng);
  if (algo == Algo::kDdpg) nets.actor_target = nets.actor.net;
  const int n_critics = algo == Algo::kDdpg ? 1 : 2;
  for (int k = 0; k < n_critics; ++k) nets.critics.emplace_back(obs_dim, act_dim, cfg, rng);
  return nets;
}

// ------------------------------------------------------ action choice

ActionSample select_action(const Actor& actor, const Vec& obs, bool explore,
                           const ExplorationConfig& cfg, Rng& rng, double obs_clip) {
  ActionSample out;
  const Mat o = clip_obs(Mat(obs), obs_clip);
  if (explore && rng.bernoulli(cfg.random_action_prob)) {
    out.action.resize(actor.act_dim);
    for (int i = 0; i < actor.act_dim; ++i) out.action(i) = rng.uniform(-actor.max_action, actor.max_action);
    out.random = true;
    return out;
  }
  Vec u;
  if (actor.stochastic && explore) {
    const Mat head = actor.net.forward(o);
    Mat eps(actor.act_dim, 1);
    for (int i = 0; i < actor.act_dim; ++i) eps(i, 0) = rng.normal();
    u = squashed_gaussian(head.topRows(actor.act_dim), head.bottomRows(actor.act_dim), eps).action.col(0);
  } else {
    u = actor.mean_action(o).col(0);
  }
  if (explore) {
    for (int i = 0; i < actor.act_dim; ++i) u(i) += cfg.noise_scale * rng.normal();
  }
  out.action = u.cwiseMax(-1.0).cwiseMin(1.0) * actor.max_action;
  return out;
}

// ---------------------------------------------------------------- DDPG

ActorGradient ddpg_actor_gradient(const AgentNetworks& nets, const Mat& obs, double action_l2) {
  const auto b = static_cast<double>(obs.cols());
  ForwardCache actor_cache;
  const Mat u = nets.actor.net.forward(obs, &actor_cache);
  ForwardCache critic_cache;
  const Mat q = nets.critics.front().net.forward(stack_rows(obs, u), &critic_cache);
  ActorGradient out;
  out.loss = -q.mean() + action_l2 * u.colwise().squaredNorm().mean();
  const Mat dq = Mat::Constant(1, obs.cols(), -1.0 / b);
  const Backprop cb = nets.critics.front().net.backward(critic_cache, dq);
  const Mat du = cb.grad_in.bottomRows(u.rows()) + (2.0 * action_l2 / b) * u;
  out.grads = nets.actor.net.backward(actor_cache, du).params;
  return out;
}

namespace {

double regress_critic(Critic& critic, const Mat& obs, const Mat& action, const Vec& target) {
  ForwardCache cache;
  const Mat q = critic.net.forward(stack_rows(obs, action), &cache);
  const Vec diff = q.row(0).transpose() - target;
  const double loss = diff.squaredNorm() / static_cast<double>(diff.size());
  require_finite(loss, "critic loss");
  const Mat grad = (2.0 / static_cast<double>(diff.size())) * diff.transpose();
  adam_step(critic.net, critic.net.backward(cache, grad).params, critic.adam);
  return loss;
}

void check_batch(const Batch& batch) {
  const auto n = batch.size();
  if (n == 0) throw std::invalid_argument("update: empty batch");
  if (batch.obs.cols() != n || batch.action.cols() != n || batch.next_obs.cols() != n ||
      batch.done.size() != n || batch.obs.rows() != batch.next_obs.rows()) {
    throw DimensionError("update: inconsistent batch shapes");
  }
}

}  // namespace

UpdateLosses ddpg_update(const Batch& batch, AgentNetworks& nets, const UpdateConfig& cfg) {
  check_batch(batch);
  if (nets.algo != Algo::kDdpg) throw std::logic_error("ddpg_update on non-DDPG networks");
  auto& critic = nets.critics.front();
  const Mat next_u = nets.actor_target.forward(batch.next_obs);
  const Vec next_q = critic.q_target(batch.next_obs, next_u);
  Vec y = batch.reward.array() + cfg.gamma * (1.0 - batch.done.array()) * next_q.array();
  const double lo = cfg.reward_min / (1.0 - cfg.gamma);
  const double hi = cfg.reward_max / (1.0 - cfg.gamma);
  y = y.cwiseMax(lo).cwiseMin(hi);

  UpdateLosses out;
  out.max_abs_target = y.cwiseAbs().maxCoeff();
  require_finite(out.max_abs_target, "critic target");
  out.critic_loss = regress_critic(critic, batch.obs, batch.action, y);

  const ActorGradient ag = ddpg_actor_gradient(nets, batch.obs, cfg.action_l2);
  require_finite(ag.loss, "actor loss");
  out.actor_loss = ag.loss;
  adam_step(nets.actor.net, ag.grads, nets.actor.adam);

  polyak_update(nets.actor_target, nets.actor.net, cfg.polyak);
  polyak_update(critic.target, critic.net, cfg.polyak);
  return out;
}

// ----------------------------------------------------------------- SAC

SquashedSample squashed_gaussian(const Mat& mean, const Mat& log_std, const Mat& eps) {
  if (mean.rows() != log_std.rows() || mean.rows() != eps.rows() || mean.cols() != log_std.cols() ||
      mean.cols() != eps.cols()) {
    throw DimensionError("squashed_gaussian: mean/log_std/eps shapes differ");
  }
  SquashedSample out;
  out.action.resize(mean.rows(), mean.cols());
  out.log_prob = Vec::Zero(mean.cols());
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  for (Eigen::Index c = 0; c < mean.cols(); ++c) {
    for (Eigen::Index r = 0; r < mean.rows(); ++r) {
      const double ls = std::clamp(log_std(r, c), kLogStdMin, kLogStdMax);
      const double z = mean(r, c) + std::exp(ls) * eps(r, c);
      out.action(r, c) = std::tanh(z);
      out.log_prob(c) += -0.5 * eps(r, c) * eps(r, c) - ls - half_log_2pi - log1m_tanh2(z);
    }
  }
  return out;
}

double squashed_gaussian_log_prob(double u, double mean, double log_std) {
  if (!(u > -1.0 && u < 1.0)) return -std::numeric_limits<double>::infinity();
  const double ls = std::clamp(log_std, kLogStdMin, kLogStdMax);
  const double z = std::atanh(u);
  const double e = (z - mean) / std::exp(ls);
  return -0.5 * e * e - ls - 0.5 * std::log(2.0 * std::numbers::pi) - log1m_tanh2(z);
}

Vec sac_targets(const Batch& batch, const AgentNetworks& nets, const SquashedSample& next,
                double gamma, double temperature) {
  Vec q_min = nets.critics[0].q_target(batch.next_obs, next.action);
  for (std::size_t k = 1; k < nets.critics.size(); ++k) {
    q_min = q_min.cwiseMin(nets.critics[k].q_target(batch.next_obs, next.action));
  }
  const Vec soft = q_min - temperature * next.log_prob;
  return batch.reward.array() + gamma * (1.0 - batch.done.array()) * soft.array();
}

ActorGradient sac_actor_gradient(const AgentNetworks& nets, const Mat& obs, const Mat& eps,
                                 double temperature) {
  const auto& actor = nets.actor;
  const int a = actor.act_dim;
  const auto n = obs.cols();
  const double inv_b = 1.0 / static_cast<double>(n);
  ForwardCache actor_cache;
  const Mat head = actor.net.forward(obs, &actor_cache);
  const Mat mean = head.topRows(a);
  const Mat log_std = head.bottomRows(a);
  const SquashedSample s = squashed_gaussian(mean, log_std, eps);

  const Mat critic_in = stack_rows(obs, s.action);
  std::vector<ForwardCache> caches(nets.critics.size());
  std::vector<Vec> qs;
  for (std::size_t k = 0; k < nets.critics.size(); ++k) {
    qs.push_back(nets.critics[k].net.forward(critic_in, &caches[k]).row(0).transpose());
  }
  std::vector<std::size_t> argmin(static_cast<std::size_t>(n), 0);
  Vec q_min = qs[0];
  for (std::size_t k = 1; k < qs.size(); ++k) {
    for (Eigen::Index c = 0; c < n; ++c) {
      if (qs[k](c) < q_min(c)) {
        q_min(c) = qs[k](c);
        argmin[static_cast<std::size_t>(c)] = k;
      }
    }
  }
  ActorGradient out;
  out.loss = (temperature * s.log_prob - q_min).mean();

  Mat du = Mat::Zero(a, n);
  for (std::size_t k = 0; k < nets.critics.size(); ++k) {
    Mat dq = Mat::Zero(1, n);
    for (Eigen::Index c = 0; c < n; ++c) {
      if (argmin[static_cast<std::size_t>(c)] == k) dq(0, c) = -inv_b;
    }
    du += nets.critics[k].net.backward(caches[k], dq).grad_in.bottomRows(a);
  }
  Mat dhead(2 * a, n);
  for (Eigen::Index c = 0; c < n; ++c) {
    for (Eigen::Index r = 0; r < a; ++r) {
      const double u = s.action(r, c);
      const double dz = du(r, c) * (1.0 - u * u) + temperature * inv_b * 2.0 * u;
      dhead(r, c) = dz;
      const double ls = log_std(r, c);
      if (ls < kLogStdMin || ls > kLogStdMax) {
        dhead(a + r, c) = 0.0;
      } else {
        dhead(a + r, c) = dz * std::exp(ls) * eps(r, c) - temperature * inv_b;
      }
    }
  }
  out.grads = actor.net.backward(actor_cache, dhead).params;
  return out;
}

UpdateLosses sac_update(const Batch& batch, AgentNetworks& nets, const UpdateConfig& cfg, Rng& rng) {
  check_batch(batch);
  if (nets.algo != Algo::kSac) throw std::logic_error("sac_update on non-SAC networks");
  const int a = nets.actor.act_dim;
  const auto n = batch.size();
  auto draw = [&] {
    Mat eps(a, n);
    for (Eigen::Index c = 0; c < n; ++c) {
      for (int r = 0; r < a; ++r) eps(r, c) = rng.normal();
    }
    return eps;
  };
  const Mat next_head = nets.actor.net.forward(batch.next_obs);
  const SquashedSample next =
      squashed_gaussian(next_head.topRows(a), next_head.bottomRows(a), draw());
  Vec y = sac_targets(batch, nets, next, cfg.gamma, cfg.sac_temperature);
  const double bound = (std::max(std::abs(cfg.reward_min), std::abs(cfg.reward_max)) +
                        cfg.sac_temperature * a * kEntropyBound) /
                       (1.0 - cfg.gamma);
  y = y.cwiseMax(-bound).cwiseMin(bound);

  UpdateLosses out;
  out.max_abs_target = y.cwiseAbs().maxCoeff();
  require_finite(out.max_abs_target, "critic target");
  for (auto& critic : nets.critics) {
    out.critic_loss += regress_critic(critic, batch.obs, batch.action, y);
  }
  out.critic_loss /= static_cast<double>(nets.critics.size());

  const ActorGradient ag = sac_actor_gradient(nets, batch.obs, draw(), cfg.sac_temperature);
  require_finite(ag.loss, "actor loss");
  out.actor_loss = ag.loss;
  adam_step(nets.actor.net, ag.grads, nets.actor.adam);
  for (auto& critic : nets.critics) polyak_update(critic.target, critic.net, cfg.polyak);
  return out;
}

// ---------------------------------------------------------- evaluation

namespace {

struct Episode {
  TrajectoryRecord record;
  Vec first_state;
  Vec last_state;
  bool reached = false;
};

double object_displacement(const Vec& first, const Vec& last) {
  double d = 0.0;
  for (Eigen::Index o = 2; o + 1 < first.size(); o += 2) {
    d += (last.segment<2>(o) - first.segment<2>(o)).norm();
  }
  return d;
}

template <typename Policy>
Episode run_episode(Env& env, Rng& rng, Policy&& policy) {
  Episode ep;
  env.reset(rng);
  ep.first_state = env.state().state;
  ep.reached = env.success();
  for (int t = 0; t < env.horizon(); ++t) {
    Transition tr;
    tr.s_t = env.state().state;
    if (env.goal()) tr.goal = env.goal()->target;
    const Vec obs = env.observation();
    tr.action = policy(obs, rng);
    const StepResult r = env.step(tr.action);
    tr.task_reward = r.task_reward;
    tr.s_next = r.state.state;
    tr.done = r.done;
    ep.reached = ep.reached || env.success();
    ep.record.transitions.push_back(std::move(tr));
    if (r.done) break;
  }
  ep.last_state = env.state().state;
  return ep;
}

EvalStats summarise(const std::vector<Episode>& eps) {
  EvalStats s;
  s.episodes = static_cast<int>(eps.size());
  std::vector<double> success;
  std::vector<double> disp;
  for (const auto& e : eps) {
    success.push_back(e.reached ? 1.0 : 0.0);
    disp.push_back(object_displacement(e.first_state, e.last_state));
  }
  s.success_mean = mean_std(success, &s.success_std);
  s.displacement_mean = mean_std(disp, &s.displacement_std);
  return s;
}

}  // namespace

EvalStats evaluate_policy(const Env& env, const Actor& actor, int episodes, Rng& rng, double obs_clip) {
  if (episodes <= 0) throw std::invalid_argument("evaluate_policy: episodes must be positive");
  auto e = env.clone();
  std::vector<Episode> eps;
  const ExplorationConfig none{};
  for (int i = 0; i < episodes; ++i) {
    eps.push_back(run_episode(*e, rng, [&](const Vec& obs, Rng& r) {
      return select_action(actor, obs, false, none, r, obs_clip).action;
    }));
  }
  return summarise(eps);
}

EvalStats evaluate_random_policy(const Env& env, int episodes, Rng& rng) {
  if (episodes <= 0) throw std::invalid_argument("evaluate_random_policy: episodes must be positive");
  auto e = env.clone();
  std::vector<Episode> eps;
  for (int i = 0; i < episodes; ++i) {
    eps.push_back(run_episode(*e, rng, [&](const Vec&, Rng& r) {
      Vec a(e->action_dim());
      for (Eigen::Index k = 0; k < a.size(); ++k) a(k) = r.uniform(-e->max_action(), e->max_action());
      return a;
    }));
  }
  return summarise(eps);
}

// ------------------------------------------------------------ training

void TrainingConfig::validate() const {
  variant.validate();
  mi_reward.validate();
  if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
  if (cycles_per_epoch <= 0 || batches_per_cycle <= 0 || rollouts_per_cycle <= 0) {
    throw std::invalid_argument("cycles, batches and rollouts per cycle must be positive");
  }
  if (test_rollouts <= 0) throw std::invalid_argument("test_rollouts must be positive");
  if (workers <= 0) throw std::invalid_argument("workers must be positive");
  if (!(learner.polyak >= 0.0 && learner.polyak <= 1.0)) {
    throw std::invalid_argument("polyak must lie in [0, 1]");
  }
  if (!(learner.obs_clip > 0.0)) throw std::invalid_argument("obs_clip must be positive");
}

namespace {

Vec observation_of(const Vec& state, const std::optional<Vec>& goal) {
  if (!goal) return state;
  Vec obs(state.size() + goal->size());
  obs << state, *goal;
  return obs;
}

Batch build_batch(std::span<const SampledTransition> samples, double max_action, double obs_clip) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  const auto& first = samples.front().transition;
  const auto obs_dim = observation_of(first.s_t, first.goal).size();
  Batch b;
  b.obs.resize(obs_dim, n);
  b.next_obs.resize(obs_dim, n);
  b.action.resize(first.action.size(), n);
  b.reward.resize(n);
  b.done.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto& t = samples[static_cast<std::size_t>(k)].transition;
    b.obs.col(k) = observation_of(t.s_t, t.goal);
    b.next_obs.col(k) = observation_of(t.s_next, t.goal);
    b.action.col(k) = t.action / max_action;
    b.reward(k) = t.task_reward;
    b.done(k) = t.done ? 1.0 : 0.0;
  }
  b.obs = clip_obs(b.obs, obs_clip);
  b.next_obs = clip_obs(b.next_obs, obs_clip);
  return b;
}

Variant phase_of(const TrainingConfig& cfg, int epoch) {
  if (cfg.variant.variant != Variant::kMiscF) return cfg.variant.variant;
  return epoch < cfg.variant.pretrain_epochs ? Variant::kIntrinsicOnly : Variant::kTaskOnly;
}

}  // namespace

TrainingResult run_training(const Env& env, const TrainingConfig& cfg, const StateSplit& split,
                            const TrainingHooks& hooks) {
  cfg.validate();
  split.validate(env.state_dim());

  Rng master(cfg.seed);
  Rng init_rng = master.fork();
  Rng rollout_rng = master.fork();
  Rng sample_rng = master.fork();
  Rng update_rng = master.fork();
  Rng mi_rng = master.fork();
  Rng eval_rng = master.fork();

  TrainingResult result;
  auto& state = result.state;
  state.nets = AgentNetworks::create(cfg.learner.algo, env.observation_dim(), env.action_dim(),
                                     env.max_action(), cfg.learner, init_rng);
  state.estimator = MiEstimator(split, env.state_dim(), cfg.mi_reward, cfg.estimator, init_rng);

  ReplayBuffer buffer(cfg.replay);
  std::vector<std::unique_ptr<Env>> worker_envs;
  for (int w = 0; w < cfg.workers; ++w) worker_envs.push_back(env.clone());

  const auto& vc = cfg.variant;
  const double obs_clip = cfg.learner.obs_clip;
  const double max_action = env.max_action();
  const PriorityFn refresh = [&](const TrajectoryRecord& t) {
    return state.estimator.trajectory_mi(t.states(), mi_rng);
  };

  if (cfg.epochs > 0 && hooks.on_start) hooks.on_start(state);
  std::int64_t episodes = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const Variant phase = phase_of(cfg, epoch);
    const bool train_mi = phase != Variant::kTaskOnly;

    UpdateConfig ucfg;
    ucfg.gamma = vc.gamma;
    ucfg.polyak = cfg.learner.polyak;
    ucfg.action_l2 = vc.action_l2;
    ucfg.sac_temperature = vc.sac_temperature;
    switch (phase) {
      case Variant::kIntrinsicOnly:
        ucfg.reward_min = cfg.mi_reward.clip_lo;
        ucfg.reward_max = cfg.mi_reward.clip_hi;
        break;
      case Variant::kMiscR:
        ucfg.reward_min = std::min(0.0, vc.misc_r_weight * cfg.mi_reward.clip_lo);
        ucfg.reward_max = 1.0 + vc.misc_r_weight * cfg.mi_reward.clip_hi;
        break;
      default:
        ucfg.reward_min = 0.0;
        ucfg.reward_max = 1.0;
        break;
    }
    const double target_bound =
        ucfg.reward_max / (1.0 - ucfg.gamma) + 1e-9 +
        (cfg.learner.algo == Algo::kSac
             ? vc.sac_temperature * env.action_dim() * kEntropyBound / (1.0 - ucfg.gamma)
             : 0.0);

    std::vector<double> intrinsic_returns;
    std::vector<double> traj_mis;
    double actor_loss = 0.0;
    double critic_loss = 0.0;
    int updates = 0;

    for (int cycle = 0; cycle < cfg.cycles_per_epoch; ++cycle) {
      // Rollouts: one rng stream per episode so results do not depend on
      // how episodes are spread over workers.
      const Actor snapshot = state.nets.actor;
      std::vector<Rng> episode_rngs;
      for (int i = 0; i < cfg.rollouts_per_cycle; ++i) episode_rngs.push_back(rollout_rng.fork());
      std::vector<Episode> eps(static_cast<std::size_t>(cfg.rollouts_per_cycle));
      auto worker = [&](int w) {
        for (int i = w; i < cfg.rollouts_per_cycle; i += cfg.workers) {
          eps[static_cast<std::size_t>(i)] =
              run_episode(*worker_envs[static_cast<std::size_t>(w)],
                          episode_rngs[static_cast<std::size_t>(i)], [&](const Vec& obs, Rng& r) {
                            return select_action(snapshot, obs, true, vc.exploration, r, obs_clip).action;
                          });
        }
      };
      if (cfg.workers == 1) {
        worker(0);
      } else {
        std::vector<std::future<void>> jobs;
        for (int w = 0; w < cfg.workers; ++w) jobs.push_back(std::async(std::launch::async, worker, w));
        for (auto& j : jobs) j.get();
      }
      for (auto& ep : eps) {
        std::vector<TrajectoryFraction> fracs;
        for (const auto& t : ep.record.transitions) fracs.push_back(t.fraction());
        intrinsic_returns.push_back(state.estimator.reward_batch(fracs).sum());
        traj_mis.push_back(state.estimator.trajectory_mi(ep.record.states(), mi_rng));
        buffer.store(std::move(ep.record));
      }
      episodes += cfg.rollouts_per_cycle;

      for (int b = 0; b < cfg.batches_per_cycle; ++b) {
        const auto samples =
            phase == Variant::kMiscP
                ? buffer.sample_prioritized(static_cast<std::size_t>(vc.batch_size), sample_rng, refresh)
                : buffer.sample_uniform(static_cast<std::size_t>(vc.batch_size), sample_rng);
        Batch batch = build_batch(samples, max_action, obs_clip);
        std::vector<TrajectoryFraction> fracs;
        fracs.reserve(samples.size());
        for (const auto& s : samples) fracs.push_back(s.fraction);
        if (phase == Variant::kIntrinsicOnly) {
          batch.reward = state.estimator.reward_batch(fracs);
        } else if (phase == Variant::kMiscR) {
          batch.reward += vc.misc_r_weight * state.estimator.reward_batch(fracs);
        }
        if (hooks.on_batch) hooks.on_batch(batch, samples, state);

        const UpdateLosses losses = cfg.learner.algo == Algo::kDdpg
                                        ? ddpg_update(batch, state.nets, ucfg)
                                        : sac_update(batch, state.nets, ucfg, update_rng);
        if (losses.max_abs_target > target_bound) {
          throw std::logic_error("critic target " + std::to_string(losses.max_abs_target) +
                                 " exceeds bound " + std::to_string(target_bound));
        }
        actor_loss += losses.actor_loss;
        critic_loss += losses.critic_loss;
        ++updates;
        if (train_mi && cfg.train_estimator) state.estimator.train(fracs);
      }
      buffer.age_priorities();
    }

    const EvalStats eval = evaluate_policy(env, state.nets.actor, cfg.test_rollouts, eval_rng, obs_clip);
    state.epoch = epoch + 1;
    MetricsRow row;
    row.epoch = epoch;
    row.episodes = episodes;
    double unused = 0.0;
    row.mean_intrinsic_return = mean_std(intrinsic_returns, &unused);
    row.mean_task_success = eval.success_mean;
    row.mi_estimate = mean_std(traj_mis, &unused);
    row.actor_loss = actor_loss / std::max(updates, 1);
    row.critic_loss = critic_loss / std::max(updates, 1);
    if (cfg.record_wall_time) {
      row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    result.log.append(row);
    if (hooks.on_epoch) hooks.on_epoch(row, state);
  }
  return result;
}

}  // namespace misc
