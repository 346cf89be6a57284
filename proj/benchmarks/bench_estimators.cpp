#include <benchmark/benchmark.h>

#include "mixest/balancing.hpp"
#include "mixest/estimators.hpp"
#include "mixest/resample.hpp"
#include "mixest/simulation.hpp"

namespace {

mixest::ObservedSample make_sample(int n, mixest::Overlap overlap) {
  mixest::ScenarioSpec spec = mixest::ScenarioSpec::defaults(overlap);
  spec.n = n;
  spec.seed = 12345;
  return mixest::generate(spec, 0);
}

void BM_FitLogistic(benchmark::State& state) {
  const auto sample = make_sample(static_cast<int>(state.range(0)),
                                  mixest::Overlap::moderate);
  for (auto _ : state)
    benchmark::DoNotOptimize(mixest::fit_logistic(sample));
}
BENCHMARK(BM_FitLogistic)->Arg(1000)->Arg(5000)->Arg(20000);

void BM_MipwAtt(benchmark::State& state) {
  const auto sample = make_sample(static_cast<int>(state.range(0)),
                                  mixest::Overlap::weak);
  for (auto _ : state)
    benchmark::DoNotOptimize(mixest::mipw_att(sample, 0.5));
}
BENCHMARK(BM_MipwAtt)->Arg(1000)->Arg(5000)->Arg(20000);

void BM_EbWeights(benchmark::State& state) {
  const auto sample = make_sample(static_cast<int>(state.range(0)),
                                  mixest::Overlap::moderate);
  for (auto _ : state)
    benchmark::DoNotOptimize(mixest::eb_weights(sample));
}
BENCHMARK(BM_EbWeights)->Arg(1000)->Arg(5000)->Arg(20000);

void BM_MipwM(benchmark::State& state) {
  const auto sample = make_sample(1000, mixest::Overlap::weak);
  const int m = static_cast<int>(state.range(0));
  for (auto _ : state)
    benchmark::DoNotOptimize(mixest::mipw_m(sample, 0.5, m, 7));
}
BENCHMARK(BM_MipwM)->Arg(10)->Arg(50)->Arg(200);

}  // namespace

BENCHMARK_MAIN();
