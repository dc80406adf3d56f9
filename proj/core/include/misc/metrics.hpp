#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace misc {

/// One row of metrics.csv.
struct MetricsRow {
  int epoch = 0;
  std::int64_t episodes = 0;  // training episodes so far
  double mean_intrinsic_return = 0.0;
  double mean_task_success = 0.0;
  double mi_estimate = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double wall_ms = 0.0;
};

/// Per-epoch metrics. Epochs must strictly increase.
class MetricsLog {
 public:
  static constexpr int kFormatVersion = 1;
  static const char* header();

  void append(const MetricsRow& row);
  const std::vector<MetricsRow>& rows() const { return rows_; }
  bool empty() const { return rows_.empty(); }
  std::size_t size() const { return rows_.size(); }

  /// Header plus one line per row, LF endings, shortest round-trip decimals.
  std::string to_csv() const;
  static std::string format_row(const MetricsRow& row);

 private:
  std::vector<MetricsRow> rows_;
};

}  // namespace misc
