#include <benchmark/benchmark.h>

#include <random>

#include "fpflow/derivatives.hpp"
#include "fpflow/math_util.hpp"
#include "fpflow/reference.hpp"
#include "fpflow/run.hpp"
#include "fpflow/tdvp.hpp"

namespace {

using namespace fpflow;

DensityModel heat_model() {
  RunConfig config = RunConfig::defaults(Experiment::Heat8D);
  DensityModel model = model_from_config(config);
  std::mt19937_64 rng = make_rng_stream(1, 0);
  std::uniform_real_distribution<double> uniform(-0.3, 0.3);
  for (Eigen::Index i = 0; i < model.params().size(); ++i) {
    model.params().values()(i) += uniform(rng);
  }
  return model;
}

void BM_FlowForward(benchmark::State& state) {
  const DensityModel model = heat_model();
  std::mt19937_64 rng = make_rng_stream(2, 0);
  const Latent latent = model.latent();
  const Eigen::VectorXd z = latent.sample(rng);
  flow_detail::FlowTrace trace;
  for (auto _ : state) {
    model.forward_trace(z, trace);
    benchmark::DoNotOptimize(trace.forward_logdet);
  }
}
BENCHMARK(BM_FlowForward);

void BM_LogProb(benchmark::State& state) {
  const DensityModel model = heat_model();
  std::mt19937_64 rng = make_rng_stream(3, 0);
  const Eigen::VectorXd x = model.sample_one(rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.log_prob(x));
  }
}
BENCHMARK(BM_LogProb);

void BM_LogDerivatives(benchmark::State& state) {
  const DensityModel model = heat_model();
  std::mt19937_64 rng = make_rng_stream(4, 0);
  const Latent latent = model.latent();
  const Eigen::VectorXd z = latent.sample(rng);
  DerivativeEngine engine(model);
  LogDerivatives derivs;
  Eigen::VectorXd x;
  for (auto _ : state) {
    engine.at_latent_point(z, x, derivs);
    benchmark::DoNotOptimize(derivs.param_grad.data());
  }
}
BENCHMARK(BM_LogDerivatives);

void BM_TdvpAssemble(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const Eigen::Index k = 392;
  std::mt19937_64 rng = make_rng_stream(5, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd o(n, k);
  Eigen::VectorXd dt_log(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) o(i, j) = normal(rng);
    dt_log(i) = normal(rng);
  }
  for (auto _ : state) {
    TdvpSystem system = assemble(o, dt_log);
    benchmark::DoNotOptimize(system.S.data());
  }
}
BENCHMARK(BM_TdvpAssemble)->Arg(1000)->Arg(10000);

void BM_TdvpSolve(benchmark::State& state) {
  const Eigen::Index k = state.range(0);
  std::mt19937_64 rng = make_rng_stream(6, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = 0; j < k; ++j) a(i, j) = normal(rng);
  TdvpSystem system;
  system.S = a * a.transpose() / double(k);
  system.F = Eigen::VectorXd::NullaryExpr(k, [&](Eigen::Index) { return normal(rng); });
  system.n_samples = 100;
  const RegularizationPolicy policy;
  for (auto _ : state) {
    benchmark::DoNotOptimize(solve(system, policy).data());
  }
}
BENCHMARK(BM_TdvpSolve)->Arg(234)->Arg(392);

void BM_RadialCrankNicolson(benchmark::State& state) {
  RadialGridConfig grid;
  grid.delta = 4e-3;
  grid.r_max = 100.0;
  grid.dt_grid = 1e-3;
  const RadialProfile profile = radial_profile_gaussian(8, grid);
  for (auto _ : state) {
    RadialProfile evolved = radial_heat_evolve(profile, 1.0, grid, 10.0 * grid.dt_grid);
    benchmark::DoNotOptimize(evolved.p.data());
  }
}
BENCHMARK(BM_RadialCrankNicolson);

}  // namespace

BENCHMARK_MAIN();
