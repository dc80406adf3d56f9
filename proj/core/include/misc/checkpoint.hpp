#pragma once

// Versioned JSON checkpoints of everything the learner owns, and atomic file
// replacement for all run artifacts.
//
//   {"format_version": 1,
//    "networks":  {name: [{"w": [[...]], "b": [...], "act": "relu"}, ...]},
//    "optimizer": {name: {"step": n, "learning_rate": .., "m": [...], "v": [...]}},
//    "rng_seed":  seed,
//    "meta":      {...}}

#include "misc/agents.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

namespace misc {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kCheckpointFormatVersion = 1;

struct CheckpointMeta {
  std::string env;
  Algo algo = Algo::kDdpg;
  Variant variant = Variant::kIntrinsicOnly;
  int epoch = 0;
  std::uint64_t seed = 0;
  int state_dim = 0;
  int obs_dim = 0;
  int act_dim = 0;
  double max_action = 1.0;
};

struct Checkpoint {
  TrainingState state;
  CheckpointMeta meta;
};

std::string checkpoint_to_json(const TrainingState& state, const CheckpointMeta& meta);
/// Throws CheckpointError on malformed documents, unknown versions or
/// inconsistent network shapes.
Checkpoint checkpoint_from_json(std::string_view text);

void write_checkpoint(const std::filesystem::path& path, const TrainingState& state,
                      const CheckpointMeta& meta);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Writes `content` to a temporary sibling, fsyncs it, renames it over
/// `path` and fsyncs the directory. Readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace misc
