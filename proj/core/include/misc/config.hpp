#pragma once

// Run configuration as flat `key = value` text. Every hyperparameter is a
// named key; unknown keys are rejected so that typos cannot silently fall
// back to defaults. The echo written next to a run reloads to an identical
// configuration.

#include "misc/agents.hpp"

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace misc {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// kDefault: published hyperparameters with the per-epoch loop shortened
///           to 10 cycles.
/// kPaper:   published values throughout, including 50 cycles per epoch
///           and 16 workers' worth of rollouts per cycle.
/// kDesk:    small networks, batch 128 and a 10^5 buffer for single-core
///           experiments.
enum class Profile { kDefault, kPaper, kDesk };

std::string_view to_string(Profile p);
Profile profile_from_string(std::string_view name);

struct RunConfig {
  std::string env = "point-push";
  std::string out_dir = "run";
  TrainingConfig training{};

  static RunConfig make(Profile profile = Profile::kDefault);

  /// Sets one key from its text form. Throws ConfigError on an unknown key
  /// or an unparsable value.
  void set(std::string_view key, std::string_view value);
  /// Text form of one key's current value.
  std::string get(std::string_view key) const;
  /// Every key in canonical order.
  static const std::vector<std::string>& keys();

  /// Parses `key = value` lines on top of `base`. '#' starts a comment.
  static RunConfig parse(std::string_view text, const RunConfig& base = make());
  static RunConfig load(const std::filesystem::path& path, const RunConfig& base = make());
  /// Canonical text form; the published default of each hyperparameter is
  /// noted in a trailing comment.
  std::string echo() const;

  /// Throws ConfigError when any value is out of range or the env is unknown.
  void validate() const;
};

/// Applies MISC_SEED from the process environment, if set.
void apply_seed_override(RunConfig& cfg);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

}  // namespace misc
