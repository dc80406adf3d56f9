#pragma once

// Finds which state groups an agent controls directly: the MI between the
// action a_t and each group of s_{t+1} under random behaviour. Groups the
// action informs strongly are controllable; the rest are candidate goals.

#include "misc/envs.hpp"
#include "misc/mi.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace misc {

/// (a_t, s_t, s_{t+1}) triples from uniformly random episodes. `trajectory`
/// labels each triple with its episode so shuffles can stay within it.
struct RolloutPairs {
  std::vector<Vec> actions;
  std::vector<Vec> states;
  std::vector<Vec> next_states;
  std::vector<int> trajectory;

  std::size_t size() const { return actions.size(); }
};

/// Throws std::invalid_argument when n_episodes < 1.
RolloutPairs collect_random_rollouts(const Env& env, int n_episodes, Rng& rng);

struct DiscoveryConfig {
  PairEstimatorConfig estimator{};
  int seeds = 5;
  /// Use s_{t+1} - s_t instead of s_{t+1}.
  bool use_delta = false;
  /// Groups whose mean MI is at least this fraction of the top group's are
  /// suggested as controllable.
  double controllable_threshold = 0.5;
  std::uint64_t seed = 0;
};

struct GroupEstimate {
  std::string name;
  std::vector<int> indices;
  std::vector<double> per_seed;
  double mean = 0.0;
  double stddev = 0.0;  // population std over seeds
  bool constant = false;
  bool controllable = false;
  int rank = 0;  // 1-based
};

/// Reported estimates never fall below this floor.
inline constexpr double kDiscoveryFloor = -0.1;

struct DiscoveryReport {
  std::vector<GroupEstimate> groups;  // in rank order
  StateSplit suggested;

  std::vector<std::string> ranking() const;
  /// group,mean_mi,std_mi,rank
  std::string to_csv() const;
  std::string to_text() const;
};

/// Estimates MI(A; group) per seed and ranks groups by mean, descending.
/// Ties break by name; groups constant over the data rank last. Throws
/// std::invalid_argument for empty, overlapping or out-of-range groups.
DiscoveryReport rank_controllable(const RolloutPairs& pairs, const NamedGroups& groups,
                                  const DiscoveryConfig& cfg);

}  // namespace misc
