#include <benchmark/benchmark.h>

#include "metarefl/analysis.hpp"
#include "metarefl/synthesis.hpp"

using namespace metarefl;

namespace {

IncidenceSpec design() {
  IncidenceSpec inc;
  inc.theta_r_deg = 70.0;
  return inc;
}

const SynthesisResult& design_run() {
  static const SynthesisResult res = [] {
    SynthesisConfig cfg;
    cfg.m_evanescent = 8;
    return synthesize(design(), cfg);
  }();
  return res;
}

void BM_Synthesize(benchmark::State& state) {
  SynthesisConfig cfg;
  cfg.m_evanescent = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(synthesize(design(), cfg));
}
BENCHMARK(BM_Synthesize)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);

void BM_Jacobian(benchmark::State& state) {
  SynthesisConfig cfg;
  cfg.m_evanescent = 8;
  const SynthesisContext ctx = make_synthesis_context(design(), cfg);
  const RealVector u = RealVector::Constant(static_cast<Eigen::Index>(ctx.unknown_count()), 0.1);
  for (auto _ : state) benchmark::DoNotOptimize(analytic_jacobian(u, ctx));
}
BENCHMARK(BM_Jacobian);

void BM_EvalFields(benchmark::State& state) {
  const FieldSolution& sol = design_run().solution;
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(eval_fields(sol, n));
}
BENCHMARK(BM_EvalFields)->Arg(256)->Arg(1024);

void BM_Scatter(benchmark::State& state) {
  const ImpedanceProfile p = clamp_reactive(design_run().profile);
  AnalysisConfig cfg;
  cfg.n_orders = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(scatter(p, 0.0, cfg));
}
BENCHMARK(BM_Scatter)->Arg(20)->Arg(40)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
