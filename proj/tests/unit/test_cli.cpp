#include "doctest.h"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string("\"") + MISC_CLI_PATH + "\" " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = ::pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string without_out_dir(const std::string& config) {
  std::istringstream in(config);
  std::string line, kept;
  while (std::getline(in, line))
    if (line.rfind("out_dir", 0) != 0) kept += line + '\n';
  return kept;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("misc_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string quick_train(const fs::path& out, const std::string& extra = "", int epochs = 5) {
  return "train --quiet --profile desk --epochs " + std::to_string(epochs) + " --cycles-per-epoch 2 --batches-per-cycle 3 "
         "--rollouts-per-cycle 2 --test-rollouts 2 --hidden 16,16 --batch-size 32 --mi-hidden 16,16 --out \"" +
         out.string() + "\" " + extra;
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n' ? 1 : 0;
  return n;
}

double parse_estimate(const std::string& out) { return std::stod(out); }

}  // namespace

TEST_CASE("train writes config, metrics and checkpoint and reruns identically") {
  const fs::path dir = scratch("train");
  REQUIRE(run(quick_train(dir / "a", "--seed 4")).code == 0);
  REQUIRE(run(quick_train(dir / "b", "--seed 4")).code == 0);
  for (const char* f : {"config.txt", "metrics.csv", "checkpoint.json"}) REQUIRE(fs::exists(dir / "a" / f));
  CHECK(without_out_dir(slurp(dir / "a" / "config.txt")) == without_out_dir(slurp(dir / "b" / "config.txt")));
  CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "b" / "metrics.csv"));
  CHECK(slurp(dir / "a" / "checkpoint.json") == slurp(dir / "b" / "checkpoint.json"));
  CHECK(count_lines(slurp(dir / "a" / "metrics.csv")) == 6);

  // The echoed config reproduces the run.
  REQUIRE(run("train --quiet --config \"" + (dir / "a" / "config.txt").string() + "\" --out \"" +
              (dir / "c").string() + "\"")
              .code == 0);
  CHECK(slurp(dir / "a" / "metrics.csv") == slurp(dir / "c" / "metrics.csv"));
  fs::remove_all(dir);
}

TEST_CASE("misc-r with zero weight and frozen estimator matches task-only") {
  const fs::path dir = scratch("beta");
  REQUIRE(run(quick_train(dir / "r", "--env point-push-goal --variant misc-r --beta 0 --mi-updates false")).code == 0);
  REQUIRE(run(quick_train(dir / "t", "--env point-push-goal --variant task-only")).code == 0);
  CHECK(slurp(dir / "r" / "metrics.csv") == slurp(dir / "t" / "metrics.csv"));
  fs::remove_all(dir);
}

TEST_CASE("train with zero epochs writes only the config") {
  const fs::path dir = scratch("zero");
  REQUIRE(run(quick_train(dir / "z", "", 0)).code == 0);
  CHECK(fs::exists(dir / "z" / "config.txt"));
  CHECK_FALSE(fs::exists(dir / "z" / "metrics.csv"));
  CHECK_FALSE(fs::exists(dir / "z" / "checkpoint.json"));
  fs::remove_all(dir);
}

TEST_CASE("train rejects bad configuration with exit code 2") {
  const fs::path dir = scratch("bad");
  CHECK(run(quick_train(dir / "x", "--variant misc-q")).code == 2);
  CHECK(run(quick_train(dir / "x", "--set nokey=1")).code == 2);
  CHECK(run(quick_train(dir / "x", "--env nowhere")).code == 2);
  CHECK(run("train --no-such-flag").code == 2);
  fs::remove_all(dir);
}

TEST_CASE("eval reports success and rejects bad arguments") {
  const fs::path dir = scratch("eval");
  REQUIRE(run(quick_train(dir / "g", "--env point-push-goal --variant task-only", 1)).code == 0);
  const std::string ckpt = "--checkpoint \"" + (dir / "g" / "checkpoint.json").string() + "\"";
  const Result r = run("eval " + ckpt + " --episodes 20 --seed 3");
  REQUIRE(r.code == 0);
  CHECK(r.out.find("env point-push-goal, 20 episodes") != std::string::npos);
  const auto pos = r.out.find("success");
  REQUIRE(pos != std::string::npos);
  const double success = std::stod(r.out.substr(pos + 7));
  CHECK(success >= 0.0);
  CHECK(success <= 1.0);
  CHECK(run("eval " + ckpt + " --episodes 20 --seed 3").out == r.out);
  CHECK(run("eval " + ckpt + " --episodes 0").code == 2);
  CHECK(run("eval " + ckpt + " --env point-push").code == 2);
  CHECK(run("eval --checkpoint \"" + (dir / "missing.json").string() + "\"").code == 2);
  fs::remove_all(dir);
}

TEST_CASE("estimate-mi on copied and independent columns") {
  const fs::path dir = scratch("est");
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<int> k8(0, 7);
  {
    std::ofstream out(dir / "data.csv");
    out << "a,b,c\n";
    for (int i = 0; i < 4000; ++i) {
      const int x = k8(gen);
      out << x << ',' << x << ',' << k8(gen) << '\n';
    }
  }
  const std::string data = "--data \"" + (dir / "data.csv").string() + "\"";
  const Result copy = run("estimate-mi " + data + " --x a --y b --out \"" + (dir / "est.csv").string() + "\"");
  REQUIRE(copy.code == 0);
  const double mi = parse_estimate(copy.out);
  MESSAGE("copy-8 estimate " << mi << " vs ln 8 = " << std::log(8.0));
  CHECK(mi >= std::log(8.0) - 0.2);
  CHECK(mi <= std::log(8.0) + 0.05);
  const std::string csv = slurp(dir / "est.csv");
  CHECK(csv.rfind("x_cols,y_cols,mi_nats,train_mi_nats,n_train,n_heldout\n\"a\",\"b\",", 0) == 0);

  const Result indep = run("estimate-mi " + data + " --x a --y c");
  REQUIRE(indep.code == 0);
  CHECK(std::abs(parse_estimate(indep.out)) <= 0.1);

  CHECK(run("estimate-mi " + data + " --x a --y b --seed 5").out == run("estimate-mi " + data + " --x a --y b --seed 5").out);

  const Result missing = run("estimate-mi " + data + " --x a --y zz --out \"" + (dir / "none.csv").string() + "\"");
  CHECK(missing.code == 2);
  CHECK_FALSE(fs::exists(dir / "none.csv"));
  fs::remove_all(dir);
}

TEST_CASE("discover ranks agent position first and writes its report") {
  const fs::path dir = scratch("disc");
  const Result r = run("discover --env point-push --episodes 60 --seeds 1 --steps 400 --delta --out \"" +
                       dir.string() + "\"");
  REQUIRE(r.code == 0);
  const std::string csv = slurp(dir / "discovery.csv");
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  CHECK(line == "group,mean_mi,std_mi,rank");
  std::getline(in, line);
  CHECK(line.rfind("agent_pos,", 0) == 0);
  in.clear();
  in.str(csv);
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto c1 = line.find(','), c2 = line.find(',', c1 + 1), c3 = line.find(',', c2 + 1);
    CHECK(std::stod(line.substr(c2 + 1, c3 - c2 - 1)) == 0.0);
  }
  CHECK(slurp(dir / "discovery.txt") == r.out);
  CHECK(run("discover --env nowhere --out \"" + dir.string() + "\"").code == 2);
  CHECK(run("discover --seeds 0 --out \"" + dir.string() + "\"").code == 2);
  fs::remove_all(dir);
}
