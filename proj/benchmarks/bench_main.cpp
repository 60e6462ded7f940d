#include <benchmark/benchmark.h>

#include "w2flow/euler_flow.hpp"
#include "w2flow/mlp.hpp"
#include "w2flow/ot.hpp"
#include "w2flow/random.hpp"

using namespace w2flow;

namespace {

Matrix points(Eigen::Index n, Eigen::Index d, std::uint64_t seed, double shift = 0.0) {
  Rng rng(seed);
  Matrix p(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < d; ++k) p(i, k) = rng.normal() + shift;
  return p;
}

Vector weights(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed);
  Vector w(n);
  for (Eigen::Index i = 0; i < n; ++i) w[i] = 0.1 + rng.uniform();
  return w / w.sum();
}

void BM_Assignment(benchmark::State& state) {
  const auto n = state.range(0);
  const ParticleCloud a = uniform_cloud(points(n, 2, 1));
  const ParticleCloud b = uniform_cloud(points(n, 2, 2, 3.0));
  for (auto _ : state) benchmark::DoNotOptimize(solve_assignment(a, b).w2);
  state.SetComplexityN(n);
}
BENCHMARK(BM_Assignment)->RangeMultiplier(2)->Range(32, 512)->Complexity(benchmark::oNCubed);

void BM_TransportSimplex(benchmark::State& state) {
  const auto n = state.range(0);
  const ParticleCloud a(points(n, 2, 3), weights(n, 4));
  const ParticleCloud b(points(n + 7, 2, 5, 2.0), weights(n + 7, 6));
  for (auto _ : state) benchmark::DoNotOptimize(solve_exact(a, b).cost);
}
BENCHMARK(BM_TransportSimplex)->RangeMultiplier(2)->Range(16, 128);

void BM_Sinkhorn(benchmark::State& state) {
  const auto n = state.range(0);
  const ParticleCloud a = uniform_cloud(points(n, 2, 7));
  const ParticleCloud b = uniform_cloud(points(n, 2, 8, 1.0));
  SinkhornOptions opt;
  opt.epsilon = 0.2;
  opt.tol = 1e-8;
  for (auto _ : state) benchmark::DoNotOptimize(sinkhorn(a, b, opt).cost);
}
BENCHMARK(BM_Sinkhorn)->RangeMultiplier(2)->Range(32, 128);

void BM_EulerRun(benchmark::State& state) {
  const ParticleCloud mu0 = uniform_cloud(points(state.range(0), 2, 9));
  const ParticleCloud mud = uniform_cloud(points(state.range(0), 2, 10, 3.0));
  EulerOptions opt;
  opt.reuse_initial_matching = state.range(1) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(run_euler(mu0, mud, 0.1, 20, ExactBackend{}, opt).snapshots.size());
  state.SetLabel(opt.reuse_initial_matching ? "reuse matching" : "re-solve each step");
}
BENCHMARK(BM_EulerRun)->ArgsProduct({{50, 200}, {0, 1}});

void BM_MlpForwardBackward(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  const Mlp net = mlp_new({2, width, width, 2}, Activation::Tanh, 11);
  const Matrix x = points(64, 2, 12);
  const Matrix y = points(64, 2, 13);
  for (auto _ : state) benchmark::DoNotOptimize(mse_loss_grad(net, x, y).value);
}
BENCHMARK(BM_MlpForwardBackward)->Arg(32)->Arg(128);

}  // namespace

BENCHMARK_MAIN();
