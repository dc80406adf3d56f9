#include "misc/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

namespace misc {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view want) {
  throw ConfigError("config: key '" + std::string(key) + "' expects " + std::string(want) + ", got '" +
                    std::string(value) + "'");
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
    bad_value(key, v, "a finite number");
  }
  return out;
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view v) {
  Int out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad_value(key, v, "true or false");
}

std::vector<int> parse_layers(std::string_view key, std::string_view v) {
  std::vector<int> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    const auto item = trim(v.substr(0, comma));
    const int width = parse_int<int>(key, item);
    if (width <= 0) bad_value(key, item, "positive layer widths");
    out.push_back(width);
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  if (out.empty()) bad_value(key, v, "a comma-separated list of layer widths");
  return out;
}

std::string format_layers(const std::vector<int>& layers) {
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(layers[i]);
  }
  return out;
}

struct Entry {
  std::string key;
  std::string published;  // published default, empty when not specified
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

template <typename Ref>
Entry real_entry(std::string key, std::string published, Ref ref) {
  return Entry{key, std::move(published),
               [ref](const RunConfig& c) { return format_double(ref(const_cast<RunConfig&>(c))); },
               [ref, key](RunConfig& c, std::string_view v) { ref(c) = parse_double(key, v); }};
}

template <typename Int, typename Ref>
Entry int_entry(std::string key, std::string published, Ref ref) {
  return Entry{key, std::move(published),
               [ref](const RunConfig& c) { return std::to_string(ref(const_cast<RunConfig&>(c))); },
               [ref, key](RunConfig& c, std::string_view v) { ref(c) = parse_int<Int>(key, v); }};
}

template <typename Ref>
Entry bool_entry(std::string key, Ref ref) {
  return Entry{key, "",
               [ref](const RunConfig& c) {
                 return std::string(ref(const_cast<RunConfig&>(c)) ? "true" : "false");
               },
               [ref, key](RunConfig& c, std::string_view v) { ref(c) = parse_bool(key, v); }};
}

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = [] {
    std::vector<Entry> t;
    t.push_back({"env", "", [](const RunConfig& c) { return c.env; },
                 [](RunConfig& c, std::string_view v) { c.env = std::string(v); }});
    t.push_back({"out_dir", "", [](const RunConfig& c) { return c.out_dir; },
                 [](RunConfig& c, std::string_view v) { c.out_dir = std::string(v); }});
    t.push_back({"variant", "",
                 [](const RunConfig& c) { return std::string(to_string(c.training.variant.variant)); },
                 [](RunConfig& c, std::string_view v) {
                   try {
                     c.training.variant.variant = variant_from_string(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(e.what());
                   }
                 }});
    t.push_back({"algo", "",
                 [](const RunConfig& c) { return std::string(to_string(c.training.learner.algo)); },
                 [](RunConfig& c, std::string_view v) {
                   try {
                     c.training.learner.algo = algo_from_string(v);
                   } catch (const std::invalid_argument& e) {
                     throw ConfigError(e.what());
                   }
                 }});
    t.push_back(int_entry<std::uint64_t>("seed", "", [](RunConfig& c) -> auto& { return c.training.seed; }));
    t.push_back(int_entry<int>("epochs", "", [](RunConfig& c) -> auto& { return c.training.epochs; }));
    t.push_back(int_entry<int>("cycles_per_epoch", "50",
                               [](RunConfig& c) -> auto& { return c.training.cycles_per_epoch; }));
    t.push_back(int_entry<int>("batches_per_cycle", "40",
                               [](RunConfig& c) -> auto& { return c.training.batches_per_cycle; }));
    t.push_back(int_entry<int>("rollouts_per_cycle", "2 per worker, 16 workers",
                               [](RunConfig& c) -> auto& { return c.training.rollouts_per_cycle; }));
    t.push_back(int_entry<int>("test_rollouts", "10",
                               [](RunConfig& c) -> auto& { return c.training.test_rollouts; }));
    t.push_back(int_entry<int>("workers", "16", [](RunConfig& c) -> auto& { return c.training.workers; }));
    t.push_back(int_entry<int>("batch_size", "256",
                               [](RunConfig& c) -> auto& { return c.training.variant.batch_size; }));
    t.push_back(int_entry<std::size_t>("buffer_size", "1000000",
                                       [](RunConfig& c) -> auto& { return c.training.replay.capacity; }));
    t.push_back({"hidden", "256,256,256",
                 [](const RunConfig& c) { return format_layers(c.training.learner.hidden); },
                 [](RunConfig& c, std::string_view v) { c.training.learner.hidden = parse_layers("hidden", v); }});
    t.push_back(real_entry("actor_lr", "0.001", [](RunConfig& c) -> auto& { return c.training.learner.actor_lr; }));
    t.push_back(real_entry("critic_lr", "0.001", [](RunConfig& c) -> auto& { return c.training.learner.critic_lr; }));
    t.push_back(real_entry("polyak", "0.95", [](RunConfig& c) -> auto& { return c.training.learner.polyak; }));
    t.push_back(real_entry("action_l2", "1", [](RunConfig& c) -> auto& { return c.training.variant.action_l2; }));
    t.push_back(real_entry("obs_clip", "200 (clip to [-200, 200])",
                           [](RunConfig& c) -> auto& { return c.training.learner.obs_clip; }));
    t.push_back(real_entry("gamma", "", [](RunConfig& c) -> auto& { return c.training.variant.gamma; }));
    t.push_back(real_entry("random_action_prob", "0.3",
                           [](RunConfig& c) -> auto& { return c.training.variant.exploration.random_action_prob; }));
    t.push_back(real_entry("noise_scale", "0.2",
                           [](RunConfig& c) -> auto& { return c.training.variant.exploration.noise_scale; }));
    t.push_back(real_entry("sac_temperature", "",
                           [](RunConfig& c) -> auto& { return c.training.variant.sac_temperature; }));
    t.push_back(real_entry("beta", "", [](RunConfig& c) -> auto& { return c.training.variant.misc_r_weight; }));
    t.push_back(int_entry<int>("pretrain_epochs", "",
                               [](RunConfig& c) -> auto& { return c.training.variant.pretrain_epochs; }));
    t.push_back(real_entry("mi_alpha", "5000", [](RunConfig& c) -> auto& { return c.training.mi_reward.alpha; }));
    t.push_back(real_entry("mi_clip_lo", "0", [](RunConfig& c) -> auto& { return c.training.mi_reward.clip_lo; }));
    t.push_back(real_entry("mi_clip_hi", "1", [](RunConfig& c) -> auto& { return c.training.mi_reward.clip_hi; }));
    t.push_back({"mi_hidden", "",
                 [](const RunConfig& c) { return format_layers(c.training.estimator.hidden); },
                 [](RunConfig& c, std::string_view v) { c.training.estimator.hidden = parse_layers("mi_hidden", v); }});
    t.push_back(real_entry("mi_lr", "", [](RunConfig& c) -> auto& { return c.training.estimator.adam.learning_rate; }));
    t.push_back(bool_entry("mi_updates", [](RunConfig& c) -> auto& { return c.training.train_estimator; }));
    t.push_back(real_entry("priority_floor", "", [](RunConfig& c) -> auto& { return c.training.replay.priority_floor; }));
    t.push_back(real_entry("priority_exponent", "",
                           [](RunConfig& c) -> auto& { return c.training.replay.priority_exponent; }));
    t.push_back(int_entry<std::int64_t>("priority_refresh", "",
                                        [](RunConfig& c) -> auto& { return c.training.replay.refresh_interval; }));
    t.push_back(bool_entry("record_wall_time", [](RunConfig& c) -> auto& { return c.training.record_wall_time; }));
    return t;
  }();
  return table;
}

const Entry& find_entry(std::string_view key) {
  const auto& t = entries();
  const auto it = std::find_if(t.begin(), t.end(), [&](const Entry& e) { return e.key == key; });
  if (it == t.end()) throw ConfigError("config: unknown key '" + std::string(key) + "'");
  return *it;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string_view to_string(Profile p) {
  switch (p) {
    case Profile::kDefault:
      return "default";
    case Profile::kPaper:
      return "paper";
    case Profile::kDesk:
      return "desk";
  }
  return "default";
}

Profile profile_from_string(std::string_view name) {
  for (Profile p : {Profile::kDefault, Profile::kPaper, Profile::kDesk}) {
    if (name == to_string(p)) return p;
  }
  throw ConfigError("unknown profile '" + std::string(name) + "' (default|paper|desk)");
}

RunConfig RunConfig::make(Profile profile) {
  RunConfig c;
  auto& t = c.training;
  t.learner.hidden = {256, 256, 256};
  t.learner.actor_lr = 1e-3;
  t.learner.critic_lr = 1e-3;
  t.learner.polyak = 0.95;
  t.learner.obs_clip = 200.0;
  t.variant.batch_size = 256;
  t.variant.action_l2 = 1.0;
  t.variant.exploration = ExplorationConfig{0.3, 0.2};
  t.mi_reward.alpha = 5000.0;
  t.estimator.adam.learning_rate = 1e-3;
  t.replay.capacity = 1000000;
  t.batches_per_cycle = 40;
  t.rollouts_per_cycle = 2;
  t.test_rollouts = 10;
  t.cycles_per_epoch = 10;
  t.workers = 1;
  switch (profile) {
    case Profile::kDefault:
      break;
    case Profile::kPaper:
      t.cycles_per_epoch = 50;
      t.rollouts_per_cycle = 2 * 16;
      break;
    case Profile::kDesk:
      t.learner.hidden = {64, 64};
      t.variant.batch_size = 128;
      t.replay.capacity = 100000;
      break;
  }
  return c;
}

void RunConfig::set(std::string_view key, std::string_view value) {
  find_entry(key).set(*this, trim(value));
}

std::string RunConfig::get(std::string_view key) const { return find_entry(key).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& e : entries()) out.push_back(e.key);
    return out;
  }();
  return k;
}

RunConfig RunConfig::parse(std::string_view text, const RunConfig& base) {
  RunConfig c = base;
  int line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    try {
      c.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path, const RunConfig& base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), base);
}

std::string RunConfig::echo() const {
  std::string out = "# misc run configuration\n";
  for (const auto& e : entries()) {
    std::string line = e.key + " = " + e.get(*this);
    if (!e.published.empty()) {
      line.resize(std::max<std::size_t>(line.size() + 1, 36), ' ');
      line += "# published: " + e.published;
    }
    out += line + '\n';
  }
  return out;
}

void RunConfig::validate() const {
  try {
    (void)make_env(env);
    training.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (training.replay.capacity == 0) throw ConfigError("buffer_size must be positive");
  if (!(training.replay.priority_floor > 0.0)) throw ConfigError("priority_floor must be positive");
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
}

void apply_seed_override(RunConfig& cfg) {
  if (const char* s = std::getenv("MISC_SEED"); s != nullptr && *s != '\0') {
    try {
      cfg.set("seed", s);
    } catch (const ConfigError&) {
      throw ConfigError(std::string("MISC_SEED must be a non-negative integer, got '") + s + "'");
    }
  }
}

}  // namespace misc
