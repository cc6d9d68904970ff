#include <benchmark/benchmark.h>

#include "daeobs/model.hpp"
#include "daeobs/observability.hpp"

namespace {

using namespace daeobs;

void run(benchmark::State& state, Execution execution) {
  const DaeModel model = builtin_wind_turbine(WindOutput::min_threshold);
  const Eigen::VectorXd x0 = model.x0();
  const Eigen::VectorXd w0 = consistent_init(model, 0.0, x0, *model.w0_guess());
  const auto probes = axis_probes(model.n_x());
  const auto samples = uniform_samples(0.0, 1.0, 11);
  LsercOptions options;
  options.execution = execution;
  for (auto _ : state) {
    auto report = run_lserc(model, x0, w0, 0.0, 1.0, probes, samples, options);
    benchmark::DoNotOptimize(report);
  }
}

void BM_LSercSerial(benchmark::State& state) { run(state, Execution::serial); }
void BM_LSercParallel(benchmark::State& state) { run(state, Execution::parallel); }

}  // namespace

BENCHMARK(BM_LSercSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LSercParallel)->Unit(benchmark::kMillisecond)->UseRealTime();

BENCHMARK_MAIN();
