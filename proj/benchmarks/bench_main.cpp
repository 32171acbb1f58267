#include <benchmark/benchmark.h>

#include <numbers>
#include <random>

#include "parastab/carleman.hpp"
#include "parastab/reconstruct.hpp"

namespace {

using namespace parastab;

SolverContext make_context(std::size_t nx, std::size_t nt) {
  const auto domain = SpatialDomain::unit(nx);
  return SolverContext{TimeWindow(1.0, 0.5, 0.25, nt), assemble_operator(domain, EllipticOperator::heat())};
}

SpatialField eigenmode(const SpatialDomain& domain, double k) {
  return domain.sample([k](double x) { return std::cos(k * std::numbers::pi * x); });
}

void BM_ForwardSolve(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto ctx = make_context(n, 4 * n);
  const auto g = eigenmode(ctx.domain(), 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(forward_solve(ctx.op, g, ctx.window));
}
BENCHMARK(BM_ForwardSolve)->Arg(64)->Arg(128)->Arg(256);

void BM_AdjointSolve(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto ctx = make_context(n, 4 * n);
  AdjointPayload payload;
  payload.terminal = eigenmode(ctx.domain(), 2.0);
  payload.boundary.assign(2, std::vector<double>(ctx.window.window_steps() + 1, 1.0));
  for (auto _ : state) benchmark::DoNotOptimize(adjoint_solve(ctx.op, payload, ctx.window));
}
BENCHMARK(BM_AdjointSolve)->Arg(64)->Arg(128)->Arg(256);

void BM_CarlemanSweep(benchmark::State& state) {
  const auto ctx = make_context(64, 256);
  const auto u = forward_solve(ctx.op, eigenmode(ctx.domain(), 1.0), ctx.window);
  const auto v = time_derivative(time_shift(u, ctx.window));
  const SpaceTimeField f(v.domain(), v.axis());
  WeightConfig config;
  const auto weights = eval_weights(config, ctx.window, ctx.domain());
  for (auto _ : state) benchmark::DoNotOptimize(constant_sweep(v, f, weights, config));
}
BENCHMARK(BM_CarlemanSweep);

void BM_ObjectiveGradient(benchmark::State& state) {
  const auto ctx = make_context(64, 256);
  InverseProblemSpec spec;
  spec.alpha_f = spec.alpha_g = 1e-4;
  const Parameterization param(spec, ctx);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  std::vector<double> x(param.size());
  for (double& v : x) v = normal(rng);
  const AdmissiblePair pair{param.source(x), param.initial(x), 0.0, 0.0};
  const auto data = synthesize_data(pair, spec, ctx);
  for (double& v : x) v = normal(rng);
  for (auto _ : state) benchmark::DoNotOptimize(objective_and_gradient(spec, param, x, data));
}
BENCHMARK(BM_ObjectiveGradient);

}  // namespace

BENCHMARK_MAIN();
