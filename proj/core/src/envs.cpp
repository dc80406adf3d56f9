#include "misc/envs.hpp"

#include <algorithm>
#include <cmath>

namespace misc {

namespace {

Eigen::Vector2d pos_of(const Vec& state, int slot) {
  return state.segment<2>(2 * slot);
}

void set_pos(Vec& state, int slot, const Eigen::Vector2d& p) { state.segment<2>(2 * slot) = p; }

Eigen::Vector2d clamp_arena(const Eigen::Vector2d& p, double half) {
  return p.cwiseMax(-half).cwiseMin(half);
}

// Pushes `disc` out of the contact radius around `pusher` along the centre
// line. `hint` orients the push when the centres coincide.
bool resolve_contact(const Eigen::Vector2d& pusher, Eigen::Vector2d& disc, double radius,
                     const Eigen::Vector2d& hint) {
  const Eigen::Vector2d d = disc - pusher;
  const double dist = d.norm();
  if (dist >= radius) return false;
  Eigen::Vector2d dir;
  if (dist > 1e-12) {
    dir = d / dist;
  } else if (hint.norm() > 1e-12) {
    dir = hint.normalized();
  } else {
    dir = Eigen::Vector2d(1.0, 0.0);
  }
  disc += dir * (radius - dist);
  return true;
}

}  // namespace

Vec Env::observation() const {
  const auto& s = state().state;
  if (goal_dim() == 0) return s;
  Vec obs(s.size() + goal_dim());
  obs << s, goal()->target;
  return obs;
}

PushEnv::PushEnv(std::string name, PushConfig cfg) : name_(std::move(name)), cfg_(cfg) {
  if (cfg_.num_objects < 1) throw std::invalid_argument("PushEnv: need at least one object");
  if (cfg_.with_goal && cfg_.num_objects != 1) {
    throw std::invalid_argument("PushEnv: goal variant supports exactly one object");
  }
  state_.state = Vec::Zero(state_dim());
}

EnvState PushEnv::reset(Rng& rng) {
  const double h = cfg_.arena_half_width;
  const int bodies = 1 + cfg_.num_objects;
  Vec s(state_dim());
  for (int b = 0; b < bodies; ++b) {
    while (true) {
      const Eigen::Vector2d p(rng.uniform(-h, h), rng.uniform(-h, h));
      bool ok = true;
      for (int o = 0; o < b && ok; ++o) ok = (p - pos_of(s, o)).norm() >= cfg_.min_separation;
      if (ok) {
        set_pos(s, b, p);
        break;
      }
    }
  }
  state_ = EnvState{s, 0};
  goal_.reset();
  if (cfg_.with_goal) {
    Vec target(2);
    target << rng.uniform(-h, h), rng.uniform(-h, h);
    goal_ = GoalTask{target, cfg_.success_radius};
  }
  return state_;
}

StepResult PushEnv::step(const Vec& action) {
  if (action.size() != 2) {
    throw DimensionError("PushEnv::step: action has " + std::to_string(action.size()) +
                         " entries, expected 2");
  }
  const double h = cfg_.arena_half_width;
  Eigen::Vector2d a;
  for (int k = 0; k < 2; ++k) {
    const double v = std::isfinite(action(k)) ? action(k) : 0.0;
    a(k) = std::clamp(v, -cfg_.max_action, cfg_.max_action);
  }
  Vec& s = state_.state;
  const Eigen::Vector2d agent = clamp_arena(pos_of(s, 0) + a, h);
  set_pos(s, 0, agent);

  std::vector<bool> moved(static_cast<std::size_t>(cfg_.num_objects), false);
  for (int o = 1; o <= cfg_.num_objects; ++o) {
    Eigen::Vector2d p = pos_of(s, o);
    if (resolve_contact(agent, p, cfg_.contact_radius, a)) {
      set_pos(s, o, clamp_arena(p, h));
      moved[static_cast<std::size_t>(o - 1)] = true;
    }
  }
  // One pass of object-object contact, pushed objects act on the others.
  for (int o = 1; o <= cfg_.num_objects; ++o) {
    if (!moved[static_cast<std::size_t>(o - 1)]) continue;
    const Eigen::Vector2d pusher = pos_of(s, o);
    for (int q = 1; q <= cfg_.num_objects; ++q) {
      if (q == o) continue;
      Eigen::Vector2d p = pos_of(s, q);
      if (resolve_contact(pusher, p, cfg_.contact_radius, a)) set_pos(s, q, clamp_arena(p, h));
    }
  }

  state_.t += 1;
  StepResult r;
  r.task_reward = success() ? 1.0 : 0.0;
  r.done = state_.t >= cfg_.horizon;
  r.state = state_;
  return r;
}

bool PushEnv::success() const {
  if (!goal_) return false;
  return (pos_of(state_.state, 1) - Eigen::Vector2d(goal_->target)).norm() < goal_->success_radius;
}

StateSplit PushEnv::state_split() const {
  StateSplit split;
  split.controllable = {0, 1};
  for (int o = 1; o <= cfg_.num_objects; ++o) split.goal_groups.push_back({2 * o, 2 * o + 1});
  return split;
}

NamedGroups PushEnv::named_groups() const {
  NamedGroups groups;
  groups.emplace_back("agent_pos", std::vector<int>{0, 1});
  if (cfg_.num_objects == 1) {
    groups.emplace_back("object_pos", std::vector<int>{2, 3});
  } else {
    for (int o = 1; o <= cfg_.num_objects; ++o) {
      groups.emplace_back("object" + std::to_string(o) + "_pos", std::vector<int>{2 * o, 2 * o + 1});
    }
  }
  return groups;
}

void PushEnv::set_state(const Vec& state, std::optional<Vec> goal_target) {
  if (state.size() != state_dim()) {
    throw DimensionError("PushEnv::set_state: expected " + std::to_string(state_dim()) +
                         " entries, got " + std::to_string(state.size()));
  }
  state_.state = state;
  state_.t = 0;
  if (cfg_.with_goal) {
    Vec target = goal_target.value_or(Vec::Zero(2));
    goal_ = GoalTask{target, cfg_.success_radius};
  }
}

std::unique_ptr<Env> make_env(std::string_view name) {
  if (name == "point-push") return std::make_unique<PushEnv>("point-push", PushConfig{});
  if (name == "point-push-goal") {
    PushConfig cfg;
    cfg.with_goal = true;
    return std::make_unique<PushEnv>("point-push-goal", cfg);
  }
  if (name == "multi-object-push") {
    PushConfig cfg;
    cfg.num_objects = 2;
    return std::make_unique<PushEnv>("multi-object-push", cfg);
  }
  throw std::invalid_argument("unknown environment '" + std::string(name) + "'");
}

std::vector<std::string> env_names() { return {"point-push", "point-push-goal", "multi-object-push"}; }

}  // namespace misc
