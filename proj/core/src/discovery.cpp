#include "misc/discovery.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace misc {

RolloutPairs collect_random_rollouts(const Env& env, int n_episodes, Rng& rng) {
  if (n_episodes < 1) throw std::invalid_argument("collect_random_rollouts: n_episodes must be >= 1");
  auto e = env.clone();
  RolloutPairs out;
  for (int ep = 0; ep < n_episodes; ++ep) {
    e->reset(rng);
    for (int t = 0; t < e->horizon(); ++t) {
      Vec a(e->action_dim());
      for (Eigen::Index k = 0; k < a.size(); ++k) a(k) = rng.uniform(-e->max_action(), e->max_action());
      out.states.push_back(e->state().state);
      const StepResult r = e->step(a);
      out.actions.push_back(std::move(a));
      out.next_states.push_back(r.state.state);
      out.trajectory.push_back(ep);
      if (r.done) break;
    }
  }
  return out;
}

namespace {

void validate_groups(const NamedGroups& groups, Eigen::Index state_dim) {
  if (groups.empty()) throw std::invalid_argument("rank_controllable: no groups given");
  std::set<int> seen;
  std::set<std::string> names;
  for (const auto& [name, idx] : groups) {
    if (idx.empty()) throw std::invalid_argument("rank_controllable: group '" + name + "' is empty");
    if (!names.insert(name).second) {
      throw std::invalid_argument("rank_controllable: duplicate group name '" + name + "'");
    }
    for (int i : idx) {
      if (i < 0 || i >= state_dim) {
        throw std::invalid_argument("rank_controllable: group '" + name + "' index " + std::to_string(i) +
                                    " outside state of dimension " + std::to_string(state_dim));
      }
      if (!seen.insert(i).second) {
        throw std::invalid_argument("rank_controllable: index " + std::to_string(i) +
                                    " appears in more than one group");
      }
    }
  }
}

}  // namespace

DiscoveryReport rank_controllable(const RolloutPairs& pairs, const NamedGroups& groups,
                                  const DiscoveryConfig& cfg) {
  if (pairs.size() == 0) throw std::invalid_argument("rank_controllable: no rollout pairs");
  if (cfg.seeds < 1) throw std::invalid_argument("rank_controllable: seeds must be >= 1");
  if (!(cfg.controllable_threshold >= 0.0 && cfg.controllable_threshold <= 1.0)) {
    throw std::invalid_argument("rank_controllable: controllable_threshold must lie in [0, 1]");
  }
  validate_groups(groups, pairs.next_states.front().size());

  DiscoveryReport report;
  for (const auto& [name, idx] : groups) {
    GroupEstimate g;
    g.name = name;
    g.indices = idx;
    std::vector<Vec> ys;
    ys.reserve(pairs.size());
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      Vec y(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t j = 0; j < idx.size(); ++j) {
        y(static_cast<Eigen::Index>(j)) = pairs.next_states[k](idx[j]);
        if (cfg.use_delta) y(static_cast<Eigen::Index>(j)) -= pairs.states[k](idx[j]);
      }
      ys.push_back(std::move(y));
    }
    g.constant = std::all_of(ys.begin(), ys.end(), [&](const Vec& y) { return y == ys.front(); });
    for (int s = 0; s < cfg.seeds; ++s) {
      double v = 0.0;
      if (!g.constant) {
        PairEstimatorConfig ec = cfg.estimator;
        ec.seed = cfg.seed + static_cast<std::uint64_t>(s);
        v = estimate_mi_pairs(pairs.actions, ys, ec, pairs.trajectory);
      }
      g.per_seed.push_back(std::max(v, kDiscoveryFloor));
    }
    double m = 0.0;
    for (double v : g.per_seed) m += v;
    m /= static_cast<double>(g.per_seed.size());
    double var = 0.0;
    for (double v : g.per_seed) var += (v - m) * (v - m);
    g.mean = m;
    g.stddev = std::sqrt(var / static_cast<double>(g.per_seed.size()));
    report.groups.push_back(std::move(g));
  }

  std::sort(report.groups.begin(), report.groups.end(), [](const GroupEstimate& a, const GroupEstimate& b) {
    if (a.constant != b.constant) return !a.constant;
    if (a.mean != b.mean) return a.mean > b.mean;
    return a.name < b.name;
  });
  const double top = report.groups.front().constant ? 0.0 : report.groups.front().mean;
  for (std::size_t i = 0; i < report.groups.size(); ++i) {
    auto& g = report.groups[i];
    g.rank = static_cast<int>(i) + 1;
    g.controllable = !g.constant && top > 0.0 && g.mean >= cfg.controllable_threshold * top;
  }
  for (const auto& g : report.groups) {
    if (g.controllable) {
      report.suggested.controllable.insert(report.suggested.controllable.end(), g.indices.begin(),
                                           g.indices.end());
    } else if (!g.constant) {
      report.suggested.goal_groups.push_back(g.indices);
    }
  }
  std::sort(report.suggested.controllable.begin(), report.suggested.controllable.end());
  return report;
}

std::vector<std::string> DiscoveryReport::ranking() const {
  std::vector<std::string> out;
  for (const auto& g : groups) out.push_back(g.name);
  return out;
}

std::string DiscoveryReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "group,mean_mi,std_mi,rank\n";
  for (const auto& g : groups) out << g.name << ',' << g.mean << ',' << g.stddev << ',' << g.rank << '\n';
  return out.str();
}

std::string DiscoveryReport::to_text() const {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  std::size_t width = 5;
  for (const auto& g : groups) width = std::max(width, g.name.size());
  out << "rank  " << std::string("group") << std::string(width - 5, ' ') << "  MI(A; group) nats\n";
  for (const auto& g : groups) {
    out << "  " << g.rank << "   " << g.name << std::string(width - g.name.size(), ' ') << "  " << g.mean
        << " +/- " << g.stddev;
    if (g.constant) out << "  (constant)";
    if (g.controllable) out << "  controllable";
    out << '\n';
  }
  return out.str();
}

}  // namespace misc
