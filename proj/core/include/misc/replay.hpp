#pragma once

#include "misc/mi.hpp"
#include "misc/ndmath.hpp"

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <vector>

namespace misc {

struct Transition {
  Vec s_t;
  Vec action;
  double task_reward = 0.0;
  Vec s_next;
  bool done = false;
  std::optional<Vec> goal;  // environment goal, for goal-conditioned tasks

  TrajectoryFraction fraction() const { return {s_t, s_next}; }
};

/// Temporally contiguous transitions of one episode with a cached priority.
struct TrajectoryRecord {
  std::vector<Transition> transitions;
  double priority = 0.0;
  std::int64_t priority_age = 0;  // estimator cycles since the priority was computed

  /// s_0, ..., s_T (one more than the number of transitions).
  std::vector<Vec> states() const;
};

struct ReplayConfig {
  std::size_t capacity = 100000;  // transitions
  double priority_floor = 1e-3;
  double priority_exponent = 1.0;
  std::int64_t refresh_interval = 1;
};

struct SampledTransition {
  Transition transition;
  TrajectoryFraction fraction;
  std::size_t trajectory = 0;  // position in the buffer at sampling time
  std::size_t index = 0;       // position within the trajectory
};

/// Recomputes the priority of a trajectory (normally its trajectory MI).
using PriorityFn = std::function<double(const TrajectoryRecord&)>;

/// Trajectory-structured FIFO storage bounded in transitions. Stores and
/// samples are serialised by an internal mutex so rollout workers can hand
/// trajectories to a learner thread.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(ReplayConfig cfg = {});

  ReplayBuffer(const ReplayBuffer&) = delete;
  ReplayBuffer& operator=(const ReplayBuffer&) = delete;

  const ReplayConfig& config() const { return cfg_; }

  /// Appends a trajectory (at least one transition, i.e. two states) and
  /// evicts the oldest trajectories until the capacity holds. The new
  /// trajectory starts at the priority floor, marked stale.
  void store(TrajectoryRecord traj);

  /// n transitions drawn with replacement, uniformly over every stored
  /// transition. Throws std::logic_error when empty.
  std::vector<SampledTransition> sample_uniform(std::size_t n, Rng& rng) const;

  /// Trajectory i is chosen with probability p_i^w / sum_j p_j^w, then a
  /// transition uniformly inside it. Stale priorities are refreshed through
  /// `refresh` first (skipped when `refresh` is empty).
  std::vector<SampledTransition> sample_prioritized(std::size_t n, Rng& rng,
                                                    const PriorityFn& refresh = {});

  /// Marks one estimator update cycle: every cached priority ages by one.
  void age_priorities();

  void set_priority(std::size_t trajectory, double priority);
  /// Current trajectory selection probabilities (no refresh).
  std::vector<double> selection_probabilities() const;

  std::size_t size() const;
  std::size_t num_trajectories() const;
  bool empty() const { return size() == 0; }
  /// Copy of one stored trajectory.
  TrajectoryRecord trajectory(std::size_t i) const;

  /// Binary snapshot: "MISCBUF1" magic, then little-endian uint64 counts and
  /// little-endian float64 payload rows.
  void save(const std::filesystem::path& path) const;
  static std::unique_ptr<ReplayBuffer> load(const std::filesystem::path& path, ReplayConfig cfg = {});

 private:
  SampledTransition make_sample(std::size_t traj, std::size_t index) const;
  std::vector<double> probabilities_locked() const;

  ReplayConfig cfg_;
  mutable std::mutex mu_;
  std::deque<TrajectoryRecord> trajectories_;
  std::size_t total_ = 0;
};

}  // namespace misc
