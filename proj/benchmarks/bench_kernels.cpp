#include <random>

#include <benchmark/benchmark.h>

#include "kmfg/prox.hpp"
#include "kmfg/solver.hpp"
#include "kmfg/transport.hpp"

namespace {

using namespace kmfg;

GridSpec grid_for(const benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  return build_grid(1, n, n, n, 1.0, 2.0);
}

void BM_ApplyK(benchmark::State& state) {
  const GridSpec g = grid_for(state);
  const ContinuityOperator op(g);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  ScalarField m(g, TimeLayout::kNodes);
  VectorField w(g);
  for (double& x : m.values()) x = n01(rng);
  for (double& x : w[0].values()) x = n01(rng);
  ScalarField out(g, TimeLayout::kIntervals);
  for (auto _ : state) {
    op.apply(m, w, out);
    benchmark::DoNotOptimize(out.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(out.size()));
}
BENCHMARK(BM_ApplyK)->Arg(16)->Arg(32)->Arg(64);

void BM_ApplyKAdjoint(benchmark::State& state) {
  const GridSpec g = grid_for(state);
  const ContinuityOperator op(g);
  ScalarField y(g, TimeLayout::kIntervals, 1.0);
  ScalarField out_m(g, TimeLayout::kNodes);
  VectorField out_w(g);
  for (auto _ : state) {
    op.adjoint(y, out_m, out_w);
    benchmark::DoNotOptimize(out_m.values().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(y.size()));
}
BENCHMARK(BM_ApplyKAdjoint)->Arg(16)->Arg(32)->Arg(64);

void BM_ProxPerspective(benchmark::State& state) {
  const Model model{ModelSpec{}};
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 3.0);
  std::vector<double> m_hat(1024), w_hat(1024);
  for (std::size_t i = 0; i < m_hat.size(); ++i) {
    m_hat[i] = u(rng);
    w_hat[i] = u(rng) - 1.0;
  }
  std::size_t i = 0;
  for (auto _ : state) {
    const double w[1] = {w_hat[i]};
    benchmark::DoNotOptimize(prox_perspective(model, m_hat[i], w, 0.1));
    i = (i + 1) % m_hat.size();
  }
}
BENCHMARK(BM_ProxPerspective);

void BM_PdhgIterations(benchmark::State& state) {
  const GridSpec g = grid_for(state);
  const Model model{ModelSpec{}};
  SolverConfig cfg;
  cfg.max_iter = 100;
  cfg.tol_gap = 1e-300;
  for (auto _ : state) {
    benchmark::DoNotOptimize(pdhg_solve(model, g, cfg).record.iterations);
  }
  state.SetItemsProcessed(state.iterations() * cfg.max_iter);
}
BENCHMARK(BM_PdhgIterations)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
