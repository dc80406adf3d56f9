#include "misc/replay.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <numeric>
#include <string>

namespace misc {

namespace {

constexpr std::array<char, 8> kMagic = {'M', 'I', 'S', 'C', 'B', 'U', 'F', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[static_cast<std::size_t>(i)] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 8);
}

void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), 8);
  if (!in) throw std::runtime_error("replay snapshot: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[static_cast<std::size_t>(i)];
  return v;
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

std::vector<Vec> TrajectoryRecord::states() const {
  std::vector<Vec> out;
  if (transitions.empty()) return out;
  out.reserve(transitions.size() + 1);
  for (const auto& t : transitions) out.push_back(t.s_t);
  out.push_back(transitions.back().s_next);
  return out;
}

ReplayBuffer::ReplayBuffer(ReplayConfig cfg) : cfg_(cfg) {
  if (cfg_.capacity == 0) throw std::invalid_argument("replay: capacity must be positive");
  if (!(cfg_.priority_floor > 0.0)) throw std::invalid_argument("replay: priority floor must be positive");
  if (!(cfg_.priority_exponent >= 0.0)) throw std::invalid_argument("replay: priority exponent must be >= 0");
}

void ReplayBuffer::store(TrajectoryRecord traj) {
  if (traj.transitions.empty()) {
    throw std::invalid_argument("replay: trajectory needs at least two states (one transition)");
  }
  if (traj.transitions.size() > cfg_.capacity) {
    throw std::invalid_argument("replay: trajectory of " + std::to_string(traj.transitions.size()) +
                                " transitions exceeds capacity " + std::to_string(cfg_.capacity));
  }
  const auto dim = traj.transitions.front().s_t.size();
  for (const auto& t : traj.transitions) {
    if (t.s_t.size() != dim || t.s_next.size() != dim) {
      throw DimensionError("replay: transition state dimensions disagree within trajectory");
    }
  }
  traj.priority = cfg_.priority_floor;
  traj.priority_age = cfg_.refresh_interval + 1;
  std::lock_guard lock(mu_);
  total_ += traj.transitions.size();
  trajectories_.push_back(std::move(traj));
  while (total_ > cfg_.capacity) {
    total_ -= trajectories_.front().transitions.size();
    trajectories_.pop_front();
  }
}

SampledTransition ReplayBuffer::make_sample(std::size_t traj, std::size_t index) const {
  const auto& t = trajectories_[traj].transitions[index];
  return SampledTransition{t, t.fraction(), traj, index};
}

std::vector<SampledTransition> ReplayBuffer::sample_uniform(std::size_t n, Rng& rng) const {
  std::lock_guard lock(mu_);
  if (total_ == 0) throw std::logic_error("replay: cannot sample from an empty buffer");
  std::vector<SampledTransition> out;
  out.reserve(n);
  if (n == 0) return out;
  std::vector<std::size_t> ends(trajectories_.size());
  std::size_t acc = 0;
  for (std::size_t i = 0; i < trajectories_.size(); ++i) {
    acc += trajectories_[i].transitions.size();
    ends[i] = acc;
  }
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t g = rng.index(total_);
    const auto it = std::upper_bound(ends.begin(), ends.end(), g);
    const auto traj = static_cast<std::size_t>(it - ends.begin());
    const std::size_t start = traj == 0 ? 0 : ends[traj - 1];
    out.push_back(make_sample(traj, g - start));
  }
  return out;
}

std::vector<double> ReplayBuffer::probabilities_locked() const {
  std::vector<double> w(trajectories_.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::pow(trajectories_[i].priority, cfg_.priority_exponent);
  }
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return w;
}

std::vector<double> ReplayBuffer::selection_probabilities() const {
  std::lock_guard lock(mu_);
  return probabilities_locked();
}

std::vector<SampledTransition> ReplayBuffer::sample_prioritized(std::size_t n, Rng& rng,
                                                                const PriorityFn& refresh) {
  std::lock_guard lock(mu_);
  if (total_ == 0) throw std::logic_error("replay: cannot sample from an empty buffer");
  std::vector<SampledTransition> out;
  out.reserve(n);
  if (n == 0) return out;
  if (refresh) {
    for (auto& traj : trajectories_) {
      if (traj.priority_age > cfg_.refresh_interval) {
        const double p = refresh(traj);
        traj.priority = std::isfinite(p) ? std::max(p, cfg_.priority_floor) : cfg_.priority_floor;
        traj.priority_age = 0;
      }
    }
  }
  const auto probs = probabilities_locked();
  std::vector<double> cdf(probs.size());
  std::partial_sum(probs.begin(), probs.end(), cdf.begin());
  for (std::size_t k = 0; k < n; ++k) {
    const double u = rng.uniform() * cdf.back();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    const auto traj = static_cast<std::size_t>(it - cdf.begin());
    const auto& tr = trajectories_[traj].transitions;
    out.push_back(make_sample(traj, rng.index(tr.size())));
  }
  return out;
}

void ReplayBuffer::age_priorities() {
  std::lock_guard lock(mu_);
  for (auto& traj : trajectories_) ++traj.priority_age;
}

void ReplayBuffer::set_priority(std::size_t trajectory, double priority) {
  std::lock_guard lock(mu_);
  if (!std::isfinite(priority)) throw NumericError("replay: non-finite priority");
  auto& traj = trajectories_.at(trajectory);
  traj.priority = std::max(priority, cfg_.priority_floor);
  traj.priority_age = 0;
}

std::size_t ReplayBuffer::size() const {
  std::lock_guard lock(mu_);
  return total_;
}

std::size_t ReplayBuffer::num_trajectories() const {
  std::lock_guard lock(mu_);
  return trajectories_.size();
}

TrajectoryRecord ReplayBuffer::trajectory(std::size_t i) const {
  std::lock_guard lock(mu_);
  return trajectories_.at(i);
}

void ReplayBuffer::save(const std::filesystem::path& path) const {
  std::lock_guard lock(mu_);
  std::uint64_t state_dim = 0;
  std::uint64_t action_dim = 0;
  std::uint64_t goal_dim = 0;
  if (!trajectories_.empty()) {
    const auto& t = trajectories_.front().transitions.front();
    state_dim = static_cast<std::uint64_t>(t.s_t.size());
    action_dim = static_cast<std::uint64_t>(t.action.size());
    goal_dim = t.goal ? static_cast<std::uint64_t>(t.goal->size()) : 0;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("replay snapshot: cannot open " + path.string());
  out.write(kMagic.data(), kMagic.size());
  put_u64(out, trajectories_.size());
  put_u64(out, state_dim);
  put_u64(out, action_dim);
  put_u64(out, goal_dim);
  for (const auto& traj : trajectories_) put_u64(out, traj.transitions.size());
  for (const auto& traj : trajectories_) {
    put_f64(out, traj.priority);
    for (const auto& t : traj.transitions) {
      if (static_cast<std::uint64_t>(t.s_t.size()) != state_dim ||
          static_cast<std::uint64_t>(t.action.size()) != action_dim ||
          (t.goal ? static_cast<std::uint64_t>(t.goal->size()) : 0) != goal_dim) {
        throw DimensionError("replay snapshot: stored transitions have inconsistent shapes");
      }
      for (double v : t.s_t) put_f64(out, v);
      for (double v : t.action) put_f64(out, v);
      put_f64(out, t.task_reward);
      for (double v : t.s_next) put_f64(out, v);
      put_f64(out, t.done ? 1.0 : 0.0);
      if (t.goal) {
        for (double v : *t.goal) put_f64(out, v);
      }
    }
  }
  if (!out) throw std::runtime_error("replay snapshot: write failed for " + path.string());
}

std::unique_ptr<ReplayBuffer> ReplayBuffer::load(const std::filesystem::path& path, ReplayConfig cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("replay snapshot: cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("replay snapshot: bad magic in " + path.string());
  const auto n_traj = get_u64(in);
  const auto sd = static_cast<Eigen::Index>(get_u64(in));
  const auto ad = static_cast<Eigen::Index>(get_u64(in));
  const auto gd = static_cast<Eigen::Index>(get_u64(in));
  std::vector<std::uint64_t> lengths(n_traj);
  for (auto& l : lengths) l = get_u64(in);
  auto buffer = std::make_unique<ReplayBuffer>(cfg);
  std::vector<std::pair<TrajectoryRecord, double>> loaded;
  for (std::uint64_t k = 0; k < n_traj; ++k) {
    TrajectoryRecord traj;
    const double priority = get_f64(in);
    traj.transitions.resize(lengths[k]);
    for (auto& t : traj.transitions) {
      t.s_t.resize(sd);
      for (Eigen::Index i = 0; i < sd; ++i) t.s_t(i) = get_f64(in);
      t.action.resize(ad);
      for (Eigen::Index i = 0; i < ad; ++i) t.action(i) = get_f64(in);
      t.task_reward = get_f64(in);
      t.s_next.resize(sd);
      for (Eigen::Index i = 0; i < sd; ++i) t.s_next(i) = get_f64(in);
      t.done = get_f64(in) != 0.0;
      if (gd > 0) {
        Vec g(gd);
        for (Eigen::Index i = 0; i < gd; ++i) g(i) = get_f64(in);
        t.goal = std::move(g);
      }
    }
    loaded.emplace_back(std::move(traj), priority);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("replay snapshot: trailing bytes in " + path.string());
  }
  for (auto& [traj, priority] : loaded) {
    buffer->store(std::move(traj));
    buffer->set_priority(buffer->num_trajectories() - 1, priority);
  }
  return buffer;
}

}  // namespace misc
