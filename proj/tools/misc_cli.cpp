// misc: train agents with mutual-information intrinsic rewards, evaluate
// checkpoints, estimate MI from CSV data and rank controllable state groups.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 training
// divergence (the last good checkpoint is still written).

#include "misc/agents.hpp"
#include "misc/checkpoint.hpp"
#include "misc/config.hpp"
#include "misc/discovery.hpp"
#include "misc/table.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitDivergence = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config_path;
  std::string profile = "default";
  std::map<std::string, std::string> flags;  // key -> value, only flags given
  std::vector<std::string> sets;             // key=value overrides
};

misc::RunConfig resolve_config(const TrainArgs& args, const std::vector<std::pair<std::string, CLI::Option*>>& opts) {
  misc::RunConfig cfg = misc::RunConfig::make(misc::profile_from_string(args.profile));
  if (!args.config_path.empty()) cfg = misc::RunConfig::load(args.config_path, cfg);
  misc::apply_seed_override(cfg);
  for (const auto& [key, opt] : opts) {
    if (opt->count() > 0) cfg.set(key, args.flags.at(key));
  }
  for (const auto& kv : args.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw misc::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

misc::CheckpointMeta meta_for(const misc::RunConfig& cfg, const misc::Env& env, int epoch) {
  misc::CheckpointMeta meta;
  meta.env = cfg.env;
  meta.algo = cfg.training.learner.algo;
  meta.variant = cfg.training.variant.variant;
  meta.epoch = epoch;
  meta.seed = cfg.training.seed;
  meta.state_dim = env.state_dim();
  meta.obs_dim = env.observation_dim();
  meta.act_dim = env.action_dim();
  meta.max_action = env.max_action();
  return meta;
}

int run_train(const misc::RunConfig& cfg, bool quiet) {
  const fs::path out = cfg.out_dir;
  fs::create_directories(out);
  misc::write_file_atomic(out / "config.txt", cfg.echo());
  if (cfg.training.epochs == 0) return kExitOk;

  const auto env = misc::make_env(cfg.env);
  misc::MetricsLog log;
  std::optional<misc::TrainingState> last_good;
  misc::TrainingHooks hooks;
  hooks.on_start = [&](const misc::TrainingState& s) { last_good = s; };
  hooks.on_epoch = [&](const misc::MetricsRow& row, const misc::TrainingState& s) {
    log.append(row);
    misc::write_file_atomic(out / "metrics.csv", log.to_csv());
    last_good = s;
    if (!quiet) std::cout << "epoch " << row.epoch << "  " << misc::MetricsLog::format_row(row) << std::endl;
  };
  try {
    const auto result = misc::run_training(*env, cfg.training, env->state_split(), hooks);
    misc::write_checkpoint(out / "checkpoint.json", result.state, meta_for(cfg, *env, result.state.epoch));
  } catch (const misc::DivergenceError& e) {
    std::cerr << "misc: training diverged: " << e.what() << "\n";
    if (last_good) {
      misc::write_checkpoint(out / "checkpoint.json", *last_good, meta_for(cfg, *env, last_good->epoch));
      std::cerr << "misc: wrote last good checkpoint (epoch " << last_good->epoch << ") to "
                << (out / "checkpoint.json").string() << "\n";
    }
    return kExitDivergence;
  }
  if (!quiet) std::cout << "wrote " << (out / "metrics.csv").string() << " and " << (out / "checkpoint.json").string() << "\n";
  return kExitOk;
}

// ----------------------------------------------------------------- eval

int run_eval(const std::string& checkpoint, const std::string& env_name, int episodes, std::uint64_t seed) {
  if (episodes <= 0) throw UsageError("--episodes must be positive");
  misc::Checkpoint cp;
  try {
    cp = misc::read_checkpoint(checkpoint);
  } catch (const misc::CheckpointError& e) {
    throw UsageError(e.what());
  }
  const std::string name = env_name.empty() ? cp.meta.env : env_name;
  const auto env = misc::make_env(name);
  if (env->observation_dim() != cp.meta.obs_dim || env->action_dim() != cp.meta.act_dim) {
    throw UsageError("checkpoint does not fit env '" + name + "': expected obs_dim " +
                     std::to_string(env->observation_dim()) + ", act_dim " + std::to_string(env->action_dim()) +
                     "; found obs_dim " + std::to_string(cp.meta.obs_dim) + ", act_dim " +
                     std::to_string(cp.meta.act_dim));
  }
  misc::Rng rng(seed);
  const auto s = misc::evaluate_policy(*env, cp.state.nets.actor, episodes, rng);
  std::printf("env %s, %d episodes\n", name.c_str(), s.episodes);
  std::printf("success      %.4f +/- %.4f\n", s.success_mean, s.success_std);
  std::printf("displacement %.6f +/- %.6f\n", s.displacement_mean, s.displacement_std);
  return kExitOk;
}

// ---------------------------------------------------------- estimate-mi

struct EstimateArgs {
  std::string data;
  std::string x_cols;
  std::string y_cols;
  std::string group_col;
  std::string out;
  int steps = 3000;
  std::uint64_t seed = 0;
};

int run_estimate(const EstimateArgs& a) {
  misc::NumericTable table;
  std::vector<misc::Vec> xs;
  std::vector<misc::Vec> ys;
  std::vector<int> groups;
  try {
    table = misc::read_csv_table(a.data);
    xs = table.select(misc::split_names(a.x_cols));
    ys = table.select(misc::split_names(a.y_cols));
    if (!a.group_col.empty()) {
      const auto g = table.column(a.group_col);
      for (const auto& row : table.rows) groups.push_back(static_cast<int>(row[g]));
    }
  } catch (const misc::TableError& e) {
    throw UsageError(a.data + ": " + e.what());
  }
  misc::PairEstimatorConfig cfg;
  cfg.steps = a.steps;
  cfg.seed = a.seed;
  misc::PairEstimate est;
  try {
    est = misc::estimate_mi_pairs_detailed(xs, ys, cfg, groups);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::printf("%.6f\n", est.heldout);
  if (!a.out.empty()) {
    std::string csv = "x_cols,y_cols,mi_nats,train_mi_nats,n_train,n_heldout\n";
    csv += '"' + a.x_cols + "\",\"" + a.y_cols + "\"," + misc::format_double(est.heldout) + ',' +
           misc::format_double(est.train) + ',' + std::to_string(est.n_train) + ',' +
           std::to_string(est.n_heldout) + '\n';
    misc::write_file_atomic(a.out, csv);
  }
  return kExitOk;
}

// ------------------------------------------------------------- discover

struct DiscoverArgs {
  std::string env = "point-push";
  int episodes = 200;
  int seeds = 5;
  std::uint64_t seed = 0;
  bool delta = false;
  double threshold = 0.5;
  int steps = 3000;
  std::string out = "discovery";
};

int run_discover(const DiscoverArgs& a) {
  std::unique_ptr<misc::Env> env;
  try {
    env = misc::make_env(a.env);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (a.episodes < 1) throw UsageError("--episodes must be >= 1");
  if (a.seeds < 1) throw UsageError("--seeds must be >= 1");
  misc::Rng rng(a.seed);
  const auto pairs = misc::collect_random_rollouts(*env, a.episodes, rng);
  misc::DiscoveryConfig cfg;
  cfg.seeds = a.seeds;
  cfg.seed = a.seed;
  cfg.use_delta = a.delta;
  cfg.controllable_threshold = a.threshold;
  cfg.estimator.steps = a.steps;
  misc::DiscoveryReport report;
  try {
    report = misc::rank_controllable(pairs, env->named_groups(), cfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const fs::path out = a.out;
  fs::create_directories(out);
  misc::write_file_atomic(out / "discovery.csv", report.to_csv());
  misc::write_file_atomic(out / "discovery.txt", report.to_text());
  std::cout << report.to_text();
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"misc: mutual-information state control"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Run the training loop; writes config.txt, metrics.csv, checkpoint.json");
  TrainArgs targs;
  bool quiet = false;
  train->add_option("--config", targs.config_path, "key = value config file (e.g. an earlier config.txt)");
  train->add_option("--profile", targs.profile, "Base defaults: default, paper or desk")->capture_default_str();
  train->add_option("--set", targs.sets, "Override any config key: --set key=value");
  train->add_flag("--quiet", quiet, "Do not print per-epoch rows");
  std::vector<std::pair<std::string, CLI::Option*>> key_opts;
  for (const auto& key : misc::RunConfig::keys()) {
    std::string names = "--" + dashed(key);
    if (key == "out_dir") names += ",--out";
    auto* opt = train->add_option(names, targs.flags[key], "config key " + key);
    key_opts.emplace_back(key, opt);
  }
  train->get_option("--beta")->description("MISC-r intrinsic weight (config key beta)");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint with the deterministic policy");
  std::string ckpt;
  std::string eval_env;
  int eval_episodes = 10;
  std::uint64_t eval_seed = 0;
  eval->add_option("--checkpoint", ckpt, "checkpoint.json")->required();
  eval->add_option("--env", eval_env, "Environment (defaults to the checkpoint's)");
  eval->add_option("--episodes", eval_episodes, "Evaluation episodes")->capture_default_str();
  eval->add_option("--seed", eval_seed, "Evaluation seed")->capture_default_str();

  auto* est = app.add_subcommand("estimate-mi", "Estimate MI(X; Y) in nats from CSV columns");
  EstimateArgs eargs;
  est->add_option("--data", eargs.data, "CSV file with a header row")->required();
  est->add_option("--x", eargs.x_cols, "Comma-separated X column names")->required();
  est->add_option("--y", eargs.y_cols, "Comma-separated Y column names")->required();
  est->add_option("--group", eargs.group_col, "Column labelling groups; marginals shuffle within a group");
  est->add_option("--steps", eargs.steps, "Training steps")->capture_default_str();
  est->add_option("--seed", eargs.seed, "Seed")->capture_default_str();
  est->add_option("--out", eargs.out, "Also write the estimate as a one-row CSV");

  auto* disc = app.add_subcommand("discover", "Rank state groups by MI with the action under random behaviour");
  DiscoverArgs dargs;
  disc->add_option("--env", dargs.env, "Environment")->capture_default_str();
  disc->add_option("--episodes", dargs.episodes, "Random episodes")->capture_default_str();
  disc->add_option("--seeds", dargs.seeds, "Estimator seeds per group")->capture_default_str();
  disc->add_option("--seed", dargs.seed, "Base seed")->capture_default_str();
  disc->add_flag("--delta", dargs.delta, "Use s_{t+1} - s_t instead of s_{t+1}");
  disc->add_option("--threshold", dargs.threshold, "Controllable if mean MI >= threshold * top")->capture_default_str();
  disc->add_option("--steps", dargs.steps, "Estimator training steps")->capture_default_str();
  disc->add_option("--out", dargs.out, "Output directory")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return run_train(resolve_config(targs, key_opts), quiet);
    if (*eval) return run_eval(ckpt, eval_env, eval_episodes, eval_seed);
    if (*est) return run_estimate(eargs);
    if (*disc) return run_discover(dargs);
  } catch (const misc::ConfigError& e) {
    std::cerr << "misc: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UsageError& e) {
    std::cerr << "misc: " << e.what() << "\n";
    return kExitUsage;
  } catch (const misc::DivergenceError& e) {
    std::cerr << "misc: diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "misc: error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
