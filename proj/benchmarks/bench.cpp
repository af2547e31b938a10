#include <benchmark/benchmark.h>

#include <vector>

#include "cnppo/envs.hpp"
#include "cnppo/fft.hpp"
#include "cnppo/net.hpp"
#include "cnppo/noise.hpp"
#include "cnppo/ppo.hpp"
#include "cnppo/rng.hpp"

namespace {

void BM_ColoredNoise(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const cnppo::NoiseColor color(1.0);
  cnppo::Rng rng(1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cnppo::generate_colored_noise(n, color, rng));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_ColoredNoise)->Arg(256)->Arg(1000)->Arg(4096);

void BM_Rfft(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  cnppo::Rng rng(2);
  std::vector<double> x(static_cast<size_t>(n));
  for (double& v : x) v = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(cnppo::fft::rfft(x));
  }
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Rfft)->Arg(1024)->Arg(1000);

void BM_MlpForwardBatch(benchmark::State& state) {
  cnppo::Rng rng(3);
  const cnppo::Mlp net = cnppo::Mlp::create({3, 64, 64, 1}, rng, 1.0);
  cnppo::Matrix x(3, 64);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.forward(x));
  }
  state.SetItemsProcessed(state.iterations() * x.cols());
}
BENCHMARK(BM_MlpForwardBatch);

void BM_MlpBackward(benchmark::State& state) {
  cnppo::Rng rng(4);
  const cnppo::Mlp net = cnppo::Mlp::create({3, 64, 64, 1}, rng, 1.0);
  cnppo::Matrix x(3, 64);
  for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  cnppo::MlpCache cache;
  const cnppo::Matrix y = net.forward(x, &cache);
  const cnppo::Matrix dy = cnppo::Matrix::Ones(y.rows(), y.cols());
  for (auto _ : state) {
    benchmark::DoNotOptimize(net.backward(cache, dy));
  }
  state.SetItemsProcessed(state.iterations() * x.cols());
}
BENCHMARK(BM_MlpBackward);

void BM_EnvStep(benchmark::State& state) {
  cnppo::VecEnv vec("pendulum-swingup", 4, cnppo::Rng(5));
  vec.reset_all();
  std::vector<cnppo::Vector> actions(4, cnppo::Vector::Zero(1));
  for (auto _ : state) {
    benchmark::DoNotOptimize(vec.step_all(actions));
  }
  state.SetItemsProcessed(state.iterations() * 4);
}
BENCHMARK(BM_EnvStep);

void BM_Gae(benchmark::State& state) {
  cnppo::Rng rng(6);
  const int T = 2048, N = 4;
  cnppo::Matrix rewards(T, N), values(T, N), starts(T + 1, N);
  starts.setZero();
  for (int i = 0; i < N; ++i) starts(0, i) = 1.0;
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < N; ++i) {
      rewards(t, i) = rng.normal();
      values(t, i) = rng.normal();
      if (t > 0 && rng.uniform() < 0.005) starts(t, i) = 1.0;
    }
  cnppo::Vector last = cnppo::Vector::Zero(N);
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        cnppo::compute_gae(rewards, values, starts, last, 0.99, 0.95));
  }
  state.SetItemsProcessed(state.iterations() * T * N);
}
BENCHMARK(BM_Gae);

void BM_PpoLossWithGrad(benchmark::State& state) {
  cnppo::Rng rng(7);
  cnppo::GaussianPolicy policy = cnppo::GaussianPolicy::create(3, 1, {64, 64}, rng);
  const int B = 64;
  cnppo::Minibatch mb;
  mb.observations = cnppo::Matrix(3, B);
  mb.actions = cnppo::Matrix(1, B);
  mb.old_log_probs = cnppo::Vector(B);
  mb.advantages = cnppo::Vector(B);
  mb.returns = cnppo::Vector(B);
  mb.old_values = cnppo::Vector(B);
  for (int c = 0; c < B; ++c) {
    for (int d = 0; d < 3; ++d) mb.observations(d, c) = rng.normal();
    mb.actions(0, c) = rng.normal();
    mb.old_log_probs(c) = -1.0 + 0.1 * rng.normal();
    mb.advantages(c) = rng.normal();
    mb.returns(c) = rng.normal();
    mb.old_values(c) = rng.normal();
  }
  cnppo::PpoLossOptions opt;
  cnppo::Vector grad;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cnppo::ppo_loss(policy, mb, opt, &grad));
  }
  state.SetItemsProcessed(state.iterations() * B);
}
BENCHMARK(BM_PpoLossWithGrad);

}  // namespace

BENCHMARK_MAIN();
