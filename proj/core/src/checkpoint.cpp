#include "misc/checkpoint.hpp"

#include "json.hpp"

#include <cerrno>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace misc {

namespace {

using nlohmann::json;

json mat_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

json vec_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

double num(const json& j, const char* what) {
  if (!j.is_number()) throw CheckpointError(std::string("checkpoint: ") + what + " is not a number");
  return j.get<double>();
}

Vec json_vec(const json& j, const char* what) {
  if (!j.is_array()) throw CheckpointError(std::string("checkpoint: ") + what + " is not an array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = num(j[i], what);
  return v;
}

Mat json_mat(const json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw CheckpointError(std::string("checkpoint: ") + what + " is not a matrix");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].is_array() ? j[0].size() : 0);
  Mat m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) {
      throw CheckpointError(std::string("checkpoint: ragged matrix in ") + what);
    }
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = num(row[static_cast<std::size_t>(c)], what);
  }
  return m;
}

json net_json(const Mlp& net) {
  json layers = json::array();
  for (const auto& l : net.layers()) {
    layers.push_back({{"w", mat_json(l.weights)}, {"b", vec_json(l.biases)}, {"act", to_string(l.activation)}});
  }
  return layers;
}

Mlp json_net(const json& j, const std::string& name) {
  if (!j.is_array() || j.empty()) throw CheckpointError("checkpoint: network '" + name + "' has no layers");
  std::vector<DenseLayer> layers;
  for (const auto& l : j) {
    if (!l.is_object() || !l.contains("w") || !l.contains("b") || !l.contains("act")) {
      throw CheckpointError("checkpoint: network '" + name + "' has a malformed layer");
    }
    DenseLayer d;
    d.weights = json_mat(l["w"], "weights");
    d.biases = json_vec(l["b"], "biases");
    try {
      d.activation = activation_from_string(l["act"].get<std::string>());
    } catch (const std::exception& e) {
      throw CheckpointError("checkpoint: network '" + name + "': " + e.what());
    }
    layers.push_back(std::move(d));
  }
  try {
    return Mlp(std::move(layers));
  } catch (const std::exception& e) {
    throw CheckpointError("checkpoint: network '" + name + "' is inconsistent: " + e.what());
  }
}

json grads_json(const MlpGrads& g) {
  json layers = json::array();
  for (std::size_t i = 0; i < g.weights.size(); ++i) {
    layers.push_back({{"w", mat_json(g.weights[i])}, {"b", vec_json(g.biases[i])}});
  }
  return layers;
}

MlpGrads json_grads(const json& j, const Mlp& net, const std::string& name) {
  if (!j.is_array() || j.size() != net.num_layers()) {
    throw CheckpointError("checkpoint: optimizer moments of '" + name + "' do not match the network");
  }
  MlpGrads g = net.zero_grads();
  for (std::size_t i = 0; i < j.size(); ++i) {
    Mat w = json_mat(j[i].at("w"), "moment");
    Vec b = json_vec(j[i].at("b"), "moment");
    if (w.rows() != g.weights[i].rows() || w.cols() != g.weights[i].cols() || b.size() != g.biases[i].size()) {
      throw CheckpointError("checkpoint: optimizer moment shapes of '" + name + "' do not match the network");
    }
    g.weights[i] = std::move(w);
    g.biases[i] = std::move(b);
  }
  return g;
}

json adam_json(const AdamState& a) {
  return {{"step", a.step},
          {"learning_rate", a.config.learning_rate},
          {"beta1", a.config.beta1},
          {"beta2", a.config.beta2},
          {"eps", a.config.eps},
          {"m", grads_json(a.first_moment)},
          {"v", grads_json(a.second_moment)}};
}

AdamState json_adam(const json& j, const Mlp& net, const std::string& name) {
  if (!j.is_object()) throw CheckpointError("checkpoint: optimizer '" + name + "' missing");
  AdamState a;
  a.config = AdamConfig{num(j.at("learning_rate"), "learning_rate"), num(j.at("beta1"), "beta1"),
                        num(j.at("beta2"), "beta2"), num(j.at("eps"), "eps")};
  a.step = j.at("step").get<std::int64_t>();
  a.first_moment = json_grads(j.at("m"), net, name);
  a.second_moment = json_grads(j.at("v"), net, name);
  return a;
}

std::vector<int> json_ints(const json& j) {
  std::vector<int> out;
  for (const auto& x : j) out.push_back(x.get<int>());
  return out;
}

}  // namespace

std::string checkpoint_to_json(const TrainingState& state, const CheckpointMeta& meta) {
  json networks = json::object();
  json optimizer = json::object();
  const auto& nets = state.nets;
  networks["actor"] = net_json(nets.actor.net);
  optimizer["actor"] = adam_json(nets.actor.adam);
  if (nets.algo == Algo::kDdpg) networks["actor_target"] = net_json(nets.actor_target);
  for (std::size_t k = 0; k < nets.critics.size(); ++k) {
    const std::string name = "critic" + std::to_string(k);
    networks[name] = net_json(nets.critics[k].net);
    networks[name + "_target"] = net_json(nets.critics[k].target);
    optimizer[name] = adam_json(nets.critics[k].adam);
  }
  const auto stats = state.estimator.nets();
  for (std::size_t g = 0; g < stats.size(); ++g) {
    const std::string name = "statistics" + std::to_string(g);
    networks[name] = net_json(stats[g].net());
    optimizer[name] = adam_json(stats[g].optimizer());
  }
  const auto& split = state.estimator.split();
  const auto& rc = state.estimator.reward_config();
  json doc = {
      {"format_version", kCheckpointFormatVersion},
      {"networks", std::move(networks)},
      {"optimizer", std::move(optimizer)},
      {"rng_seed", meta.seed},
      {"meta",
       {{"env", meta.env},
        {"algo", to_string(meta.algo)},
        {"variant", to_string(meta.variant)},
        {"epoch", meta.epoch},
        {"obs_dim", meta.obs_dim},
        {"act_dim", meta.act_dim},
        {"max_action", meta.max_action},
        {"state_dim", meta.state_dim},
        {"split", {{"controllable", split.controllable}, {"goal_groups", split.goal_groups}}},
        {"mi_reward", {{"alpha", rc.alpha}, {"clip_lo", rc.clip_lo}, {"clip_hi", rc.clip_hi}}},
        {"mi_surrogate", state.estimator.form() == SurrogateForm::kLinear ? "linear" : "log-mean-exp"}}}};
  return doc.dump(1) + "\n";
}

Checkpoint checkpoint_from_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw CheckpointError(std::string("checkpoint: invalid JSON: ") + e.what());
  }
  try {
    if (!doc.is_object() || !doc.contains("format_version")) {
      throw CheckpointError("checkpoint: missing format_version");
    }
    const int version = doc["format_version"].get<int>();
    if (version != kCheckpointFormatVersion) {
      throw CheckpointError("checkpoint: unsupported format_version " + std::to_string(version));
    }
    const auto& m = doc.at("meta");
    Checkpoint cp;
    cp.meta.env = m.at("env").get<std::string>();
    cp.meta.algo = algo_from_string(m.at("algo").get<std::string>());
    cp.meta.variant = variant_from_string(m.at("variant").get<std::string>());
    cp.meta.epoch = m.at("epoch").get<int>();
    cp.meta.seed = doc.at("rng_seed").get<std::uint64_t>();
    cp.meta.obs_dim = m.at("obs_dim").get<int>();
    cp.meta.act_dim = m.at("act_dim").get<int>();
    cp.meta.state_dim = m.at("state_dim").get<int>();
    cp.meta.max_action = num(m.at("max_action"), "max_action");

    const auto& networks = doc.at("networks");
    const auto& optimizer = doc.at("optimizer");
    auto& nets = cp.state.nets;
    nets.algo = cp.meta.algo;
    nets.actor.net = json_net(networks.at("actor"), "actor");
    nets.actor.adam = json_adam(optimizer.at("actor"), nets.actor.net, "actor");
    nets.actor.act_dim = cp.meta.act_dim;
    nets.actor.max_action = cp.meta.max_action;
    nets.actor.stochastic = cp.meta.algo == Algo::kSac;
    const int expected_out = nets.actor.stochastic ? 2 * cp.meta.act_dim : cp.meta.act_dim;
    if (nets.actor.net.input_dim() != cp.meta.obs_dim || nets.actor.net.output_dim() != expected_out) {
      throw CheckpointError("checkpoint: actor shape does not match obs_dim/act_dim");
    }
    if (cp.meta.algo == Algo::kDdpg) nets.actor_target = json_net(networks.at("actor_target"), "actor_target");
    const std::size_t n_critics = cp.meta.algo == Algo::kDdpg ? 1 : 2;
    for (std::size_t k = 0; k < n_critics; ++k) {
      const std::string name = "critic" + std::to_string(k);
      Critic c;
      c.net = json_net(networks.at(name), name);
      c.target = json_net(networks.at(name + "_target"), name + "_target");
      c.adam = json_adam(optimizer.at(name), c.net, name);
      if (c.net.input_dim() != cp.meta.obs_dim + cp.meta.act_dim || c.net.output_dim() != 1) {
        throw CheckpointError("checkpoint: " + name + " shape does not match obs_dim/act_dim");
      }
      nets.critics.push_back(std::move(c));
    }

    StateSplit split;
    split.controllable = json_ints(m.at("split").at("controllable"));
    for (const auto& g : m.at("split").at("goal_groups")) split.goal_groups.push_back(json_ints(g));
    MiRewardConfig rc;
    rc.alpha = num(m.at("mi_reward").at("alpha"), "alpha");
    rc.clip_lo = num(m.at("mi_reward").at("clip_lo"), "clip_lo");
    rc.clip_hi = num(m.at("mi_reward").at("clip_hi"), "clip_hi");
    const auto form = m.value("mi_surrogate", std::string("linear")) == "linear" ? SurrogateForm::kLinear
                                                                                 : SurrogateForm::kLogMeanExp;
    std::vector<Mlp> stats;
    for (std::size_t g = 0; g < split.num_groups(); ++g) {
      const std::string name = "statistics" + std::to_string(g);
      stats.push_back(json_net(networks.at(name), name));
    }
    StatisticsNetConfig sc;
    if (!stats.empty()) {
      sc.hidden.clear();
      for (std::size_t l = 0; l + 1 < stats[0].num_layers(); ++l) {
        sc.hidden.push_back(static_cast<int>(stats[0].layers()[l].weights.rows()));
      }
    }
    Rng scratch(0);
    cp.state.estimator = MiEstimator(split, cp.meta.state_dim, rc, sc, scratch, form);
    auto& est_nets = cp.state.estimator.mutable_nets();
    for (std::size_t g = 0; g < stats.size(); ++g) {
      const std::string name = "statistics" + std::to_string(g);
      if (stats[g].input_dim() != est_nets[g].net().input_dim() || stats[g].output_dim() != 1) {
        throw CheckpointError("checkpoint: " + name + " shape does not match the state split");
      }
      est_nets[g].mutable_optimizer() = json_adam(optimizer.at(name), stats[g], name);
      est_nets[g].mutable_net() = stats[g];
    }
    cp.state.epoch = cp.meta.epoch;
    return cp;
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception& e) {
    throw CheckpointError(std::string("checkpoint: ") + e.what());
  }
}

void write_checkpoint(const std::filesystem::path& path, const TrainingState& state,
                      const CheckpointMeta& meta) {
  write_file_atomic(path, checkpoint_to_json(state, meta));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("checkpoint: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  const auto tmp = dir / ("." + path.filename().string() + ".tmp." + std::to_string(::getpid()));
  const auto fail = [&](const std::string& what) {
    const std::string msg = what + " " + tmp.string() + ": " + std::strerror(errno);
    ::unlink(tmp.c_str());
    throw std::runtime_error(msg);
  };
  const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) fail("cannot create");
  std::size_t done = 0;
  while (done < content.size()) {
    const auto n = ::write(fd, content.data() + done, content.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      ::close(fd);
      fail("cannot write");
    }
    done += static_cast<std::size_t>(n);
  }
  if (::fsync(fd) != 0) {
    ::close(fd);
    fail("cannot fsync");
  }
  if (::close(fd) != 0) fail("cannot close");
  if (::rename(tmp.c_str(), path.c_str()) != 0) fail("cannot rename");
  if (const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY | O_CLOEXEC); dfd >= 0) {
    ::fsync(dfd);
    ::close(dfd);
  }
}

}  // namespace misc
