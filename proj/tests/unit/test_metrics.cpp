#include "doctest.h"

#include "misc/metrics.hpp"

#include <sstream>

using namespace misc;

TEST_CASE("metrics header is fixed") {
  CHECK(MetricsLog::kFormatVersion == 1);
  CHECK(std::string(MetricsLog::header()) ==
        "epoch,episodes,mean_intrinsic_return,mean_task_success,mi_estimate,actor_loss,critic_loss,wall_ms");
  CHECK(MetricsLog{}.to_csv() == std::string(MetricsLog::header()) + "\n");
}

TEST_CASE("rows format with shortest round-trip decimals") {
  MetricsRow r;
  r.epoch = 3;
  r.episodes = 80;
  r.mean_intrinsic_return = 0.1 + 0.2;
  r.mean_task_success = 0.5;
  r.critic_loss = 1e-20;
  const std::string line = MetricsLog::format_row(r);
  CHECK(line == "3,80,0.30000000000000004,0.5,0,0,1e-20,0");
}

TEST_CASE("epochs must strictly increase") {
  MetricsLog log;
  MetricsRow r;
  log.append(r);
  CHECK_THROWS_AS(log.append(r), std::invalid_argument);
  r.epoch = 1;
  log.append(r);
  CHECK(log.size() == 2);
  std::istringstream in(log.to_csv());
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    CHECK(line.find('\r') == std::string::npos);
    ++lines;
  }
  CHECK(lines == 3);
}
