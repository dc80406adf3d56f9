// Microbenchmarks for the hot paths of a training cycle: network passes,
// intrinsic rewards, replay sampling, environment steps and learner updates.

#include "misc/agents.hpp"
#include "misc/envs.hpp"
#include "misc/mi.hpp"
#include "misc/replay.hpp"

#include <benchmark/benchmark.h>

using namespace misc;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, Rng& rng) {
  return Mat::NullaryExpr(r, c, [&] { return rng.normal(); });
}

std::vector<TrajectoryFraction> random_fractions(std::size_t n, int dim, Rng& rng) {
  std::vector<TrajectoryFraction> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({random_mat(dim, 1, rng), random_mat(dim, 1, rng)});
  return out;
}

Batch random_batch(int n, int obs, int act, Rng& rng) {
  Batch b;
  b.obs = random_mat(obs, n, rng);
  b.action = random_mat(act, n, rng).array().tanh();
  b.reward = Vec::NullaryExpr(n, [&] { return rng.uniform(); });
  b.next_obs = random_mat(obs, n, rng);
  b.done = Vec::Zero(n);
  return b;
}

}  // namespace

static void BM_MlpForwardBackward(benchmark::State& state) {
  Rng rng(1);
  const int width = static_cast<int>(state.range(0));
  const int batch = static_cast<int>(state.range(1));
  const Mlp net = Mlp::create(MlpSpec{8, {width, width}, 1}, rng);
  const Mat x = random_mat(8, batch, rng);
  const Mat g = Mat::Ones(1, batch);
  for (auto _ : state) {
    ForwardCache cache;
    benchmark::DoNotOptimize(net.forward(x, &cache));
    benchmark::DoNotOptimize(net.backward(cache, g));
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_MlpForwardBackward)->Args({64, 128})->Args({256, 256});

static void BM_TransitionRewardBatch(benchmark::State& state) {
  Rng rng(2);
  const StateSplit split{{0, 1}, {{2, 3}}};
  MiEstimator est(split, 4, MiRewardConfig{}, StatisticsNetConfig{}, rng);
  const auto fracs = random_fractions(static_cast<std::size_t>(state.range(0)), 4, rng);
  for (auto _ : state) benchmark::DoNotOptimize(est.reward_batch(fracs));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TransitionRewardBatch)->Arg(128)->Arg(1024);

static void BM_EstimatorTrainStep(benchmark::State& state) {
  Rng rng(3);
  const StateSplit split{{0, 1}, {{2, 3}}};
  MiEstimator est(split, 4, MiRewardConfig{}, StatisticsNetConfig{}, rng);
  const auto fracs = random_fractions(128, 4, rng);
  for (auto _ : state) benchmark::DoNotOptimize(est.train(fracs));
}
BENCHMARK(BM_EstimatorTrainStep);

static void BM_ReplaySamplePrioritized(benchmark::State& state) {
  Rng rng(4);
  ReplayBuffer buf;
  const auto env = make_env("point-push");
  for (int ep = 0; ep < state.range(0); ++ep) {
    TrajectoryRecord rec;
    Vec s = env->reset(rng).state;
    for (int t = 0; t < env->horizon(); ++t) {
      const Vec a = Vec::NullaryExpr(2, [&] { return rng.uniform(-0.05, 0.05); });
      const StepResult r = env->step(a);
      rec.transitions.push_back({s, a, r.task_reward, r.state.state, r.done, std::nullopt});
      s = r.state.state;
    }
    buf.store(std::move(rec));
    buf.set_priority(static_cast<std::size_t>(ep), rng.uniform(0.0, 2.0));
  }
  for (auto _ : state) benchmark::DoNotOptimize(buf.sample_prioritized(128, rng));
  state.SetItemsProcessed(state.iterations() * 128);
}
BENCHMARK(BM_ReplaySamplePrioritized)->Arg(100)->Arg(2000);

static void BM_EnvStep(benchmark::State& state) {
  const auto env = make_env(state.range(0) == 0 ? "point-push" : "multi-object-push");
  Rng rng(5);
  env->reset(rng);
  for (auto _ : state) {
    const Vec a = Vec::NullaryExpr(2, [&] { return rng.uniform(-0.05, 0.05); });
    if (env->step(a).done) env->reset(rng);
  }
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_EnvStep)->Arg(0)->Arg(1);

static void BM_DdpgUpdate(benchmark::State& state) {
  Rng rng(6);
  AgentNetworks nets = AgentNetworks::create(Algo::kDdpg, 6, 2, 0.05, LearnerConfig{}, rng);
  const Batch batch = random_batch(128, 6, 2, rng);
  for (auto _ : state) benchmark::DoNotOptimize(ddpg_update(batch, nets, UpdateConfig{}));
}
BENCHMARK(BM_DdpgUpdate);

static void BM_SacUpdate(benchmark::State& state) {
  Rng rng(7);
  AgentNetworks nets = AgentNetworks::create(Algo::kSac, 6, 2, 0.05, LearnerConfig{}, rng);
  const Batch batch = random_batch(128, 6, 2, rng);
  for (auto _ : state) benchmark::DoNotOptimize(sac_update(batch, nets, UpdateConfig{}, rng));
}
BENCHMARK(BM_SacUpdate);

BENCHMARK_MAIN();
