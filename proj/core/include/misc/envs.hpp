#pragma once

// Deterministic 2D pushing arenas. A point agent moves by its action each
// step; discs it overlaps are pushed out along the centre line. Only the
// agent is directly actuated, so object positions change only through
// contact.

#include "misc/mi.hpp"
#include "misc/ndmath.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace misc {

struct EnvState {
  Vec state;  // agent_pos(2) ++ object_pos(2) per object
  int t = 0;
};

struct GoalTask {
  Vec target;  // desired object position
  double success_radius = 0.05;
};

struct StepResult {
  EnvState state;
  double task_reward = 0.0;
  bool done = false;
};

/// Named index sets into the state vector, e.g. "agent_pos" -> {0, 1}.
using NamedGroups = std::vector<std::pair<std::string, std::vector<int>>>;

class Env {
 public:
  virtual ~Env() = default;

  virtual std::unique_ptr<Env> clone() const = 0;

  virtual std::string_view name() const = 0;
  virtual int state_dim() const = 0;
  virtual int action_dim() const = 0;
  /// Dimension of the environment goal, 0 for goal-free variants.
  virtual int goal_dim() const = 0;
  virtual double max_action() const = 0;
  virtual int horizon() const = 0;

  virtual EnvState reset(Rng& rng) = 0;
  /// Actions are clamped to [-max_action, max_action] per dimension;
  /// non-finite entries are treated as zero.
  virtual StepResult step(const Vec& action) = 0;

  virtual const EnvState& state() const = 0;
  virtual const std::optional<GoalTask>& goal() const = 0;
  /// Object within the success radius of the goal. Always false without a goal.
  virtual bool success() const = 0;

  virtual StateSplit state_split() const = 0;
  virtual NamedGroups named_groups() const = 0;

  int observation_dim() const { return state_dim() + goal_dim(); }
  /// State followed by the goal target, if any.
  Vec observation() const;
};

struct PushConfig {
  int num_objects = 1;
  bool with_goal = false;
  int horizon = 50;
  double max_action = 0.05;
  double contact_radius = 0.06;
  double success_radius = 0.05;
  double min_separation = 0.2;
  double arena_half_width = 1.0;
};

class PushEnv final : public Env {
 public:
  PushEnv(std::string name, PushConfig cfg);

  std::unique_ptr<Env> clone() const override { return std::make_unique<PushEnv>(*this); }

  std::string_view name() const override { return name_; }
  int state_dim() const override { return 2 + 2 * cfg_.num_objects; }
  int action_dim() const override { return 2; }
  int goal_dim() const override { return cfg_.with_goal ? 2 : 0; }
  double max_action() const override { return cfg_.max_action; }
  int horizon() const override { return cfg_.horizon; }

  EnvState reset(Rng& rng) override;
  StepResult step(const Vec& action) override;

  const EnvState& state() const override { return state_; }
  const std::optional<GoalTask>& goal() const override { return goal_; }
  bool success() const override;

  StateSplit state_split() const override;
  NamedGroups named_groups() const override;

  const PushConfig& config() const { return cfg_; }
  /// Places the agent, objects and goal directly (tests, scripted rollouts).
  void set_state(const Vec& state, std::optional<Vec> goal_target = std::nullopt);

 private:
  std::string name_;
  PushConfig cfg_;
  EnvState state_;
  std::optional<GoalTask> goal_;
};

/// Registry: "point-push", "point-push-goal", "multi-object-push".
/// Throws std::invalid_argument for unknown names.
std::unique_ptr<Env> make_env(std::string_view name);
std::vector<std::string> env_names();

}  // namespace misc
