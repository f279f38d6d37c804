#include <benchmark/benchmark.h>

#include <vector>

#include "kinrisk/em_engine.hpp"
#include "kinrisk/inference.hpp"
#include "kinrisk/simulate.hpp"
#include "kinrisk/spline.hpp"
#include "kinrisk/trial_design.hpp"

using namespace kinrisk;

namespace {

const SimData& sample() {
  static const SimData data = [] {
    SimScenario s;
    s.c_max = 222.5;  // about 40% censoring for the default scenario
    return gen_dataset(s);
  }();
  return data;
}

}  // namespace

static void BM_SplineEval(benchmark::State& state) {
  const SplineBasis b(static_cast<int>(state.range(0)), {40.0, 55.0, 70.0}, 20.0, 95.0);
  std::vector<double> out(b.size());
  double t = 20.0;
  for (auto _ : state) {
    b.eval(t, out);
    benchmark::DoNotOptimize(out.data());
    t = t > 95.0 ? 20.0 : t + 0.37;
  }
}
BENCHMARK(BM_SplineEval)->Arg(1)->Arg(2)->Arg(3);

static void BM_EStep(benchmark::State& state) {
  const auto& d = sample().data;
  const auto spec = make_spec(d, SplineBasis::constant(), true);
  const auto f = fit(d, spec);
  for (auto _ : state) benchmark::DoNotOptimize(e_step(d, spec, f.params));
}
BENCHMARK(BM_EStep)->Unit(benchmark::kMicrosecond);

static void BM_FitConstantBeta(benchmark::State& state) {
  const auto& d = sample().data;
  const auto spec = make_spec(d, SplineBasis::constant(), true);
  for (auto _ : state) benchmark::DoNotOptimize(fit(d, spec));
}
BENCHMARK(BM_FitConstantBeta)->Unit(benchmark::kMillisecond);

static void BM_FitSpline(benchmark::State& state) {
  const auto& d = sample().data;
  std::vector<double> events;
  for (const auto& r : d.records()) {
    if (r.delta) events.push_back(r.y);
  }
  const auto spec = make_spec(d, place_knots(events, static_cast<int>(state.range(0)), 3), true);
  for (auto _ : state) benchmark::DoNotOptimize(fit(d, spec));
}
BENCHMARK(BM_FitSpline)->Arg(0)->Arg(2)->Unit(benchmark::kMillisecond);

static void BM_Bootstrap10(benchmark::State& state) {
  const auto& d = sample().data;
  const auto spec = make_spec(d, SplineBasis::constant(), true);
  const auto f = fit(d, spec);
  BootstrapOptions o;
  o.B = 10;
  o.seed = 1;
  o.warm_start = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(multiplier_bootstrap(d, spec, {}, o, &f));
}
BENCHMARK(BM_Bootstrap10)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_SampleSize(benchmark::State& state) {
  double p1 = 0.02;
  for (auto _ : state) {
    benchmark::DoNotOptimize(sample_size(0.06, p1));
    p1 = p1 > 0.05 ? 0.02 : p1 + 1e-4;
  }
}
BENCHMARK(BM_SampleSize);

BENCHMARK_MAIN();
