#include "misc/metrics.hpp"

#include <charconv>
#include <stdexcept>

namespace misc {

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace

const char* MetricsLog::header() {
  return "epoch,episodes,mean_intrinsic_return,mean_task_success,mi_estimate,actor_loss,"
         "critic_loss,wall_ms";
}

void MetricsLog::append(const MetricsRow& row) {
  if (!rows_.empty() && row.epoch <= rows_.back().epoch) {
    throw std::invalid_argument("metrics: epoch " + std::to_string(row.epoch) +
                                " does not follow " + std::to_string(rows_.back().epoch));
  }
  rows_.push_back(row);
}

std::string MetricsLog::format_row(const MetricsRow& row) {
  std::string out = std::to_string(row.epoch) + "," + std::to_string(row.episodes);
  for (double v : {row.mean_intrinsic_return, row.mean_task_success, row.mi_estimate,
                   row.actor_loss, row.critic_loss, row.wall_ms}) {
    out += ',';
    append_double(out, v);
  }
  return out;
}

std::string MetricsLog::to_csv() const {
  std::string out = header();
  out += '\n';
  for (const auto& r : rows_) {
    out += format_row(r);
    out += '\n';
  }
  return out;
}

}  // namespace misc
