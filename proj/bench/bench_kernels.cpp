#include <benchmark/benchmark.h>

#include "unitavg/montecarlo.hpp"
#include "unitavg/oracle.hpp"

namespace {

unitavg::SimConfig small_study(int threads) {
  unitavg::SimConfig c;
  c.N = 10;
  c.T = 40;
  c.replications = 50;
  c.lambda1_grid = {0.0, 0.3};
  c.seed = 7;
  c.threads = threads;
  return c;
}

unitavg::LimitSpec limit_spec(std::size_t n) {
  unitavg::LimitSpec s;
  for (std::size_t i = 0; i < n; ++i) {
    s.etas.push_back(Eigen::Vector2d(0.3 * static_cast<double>(i), -0.1 * static_cast<double>(i)));
    s.variances.push_back(Eigen::Matrix2d::Identity() * (1.0 + 0.1 * static_cast<double>(i)));
  }
  s.d0 = Eigen::Vector2d(1.0, 0.5);
  return s;
}

void BM_StudySerial(benchmark::State& st) {
  const auto c = small_study(1);
  for (auto _ : st) benchmark::DoNotOptimize(unitavg::serial::run_study(c));
}

void BM_StudyParallel(benchmark::State& st) {
  const auto c = small_study(static_cast<int>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(unitavg::run_study(c));
}

void BM_LimitSerial(benchmark::State& st) {
  const auto s = limit_spec(8);
  for (auto _ : st)
    benchmark::DoNotOptimize(unitavg::serial::simulate_limit(s, {}, 2000, 11));
}

void BM_LimitParallel(benchmark::State& st) {
  const auto s = limit_spec(8);
  for (auto _ : st)
    benchmark::DoNotOptimize(
        unitavg::simulate_limit(s, {}, 2000, 11, static_cast<int>(st.range(0))));
}

}  // namespace

BENCHMARK(BM_StudySerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_StudyParallel)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LimitSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LimitParallel)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
