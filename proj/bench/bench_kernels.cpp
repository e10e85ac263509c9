// Serial reference vs OpenMP kernels, and serial vs parallel experiment jobs.

#include <benchmark/benchmark.h>

#include <random>

#include "mts/experiment.hpp"
#include "mts/kernels.hpp"

namespace {

using namespace mts;

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& v : m.values()) v = n(rng);
  return m;
}

template <Matrix (*Gemm)(const Matrix&, kernels::Transpose, const Matrix&, kernels::Transpose)>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Matrix a = random_matrix(n, n, 1), b = random_matrix(n, n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(Gemm(a, kernels::Transpose::no, b, kernels::Transpose::yes));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK_TEMPLATE(BM_Gemm, kernels::serial::gemm)->Arg(32)->Arg(128)->Arg(256);
BENCHMARK_TEMPLATE(BM_Gemm, kernels::parallel::gemm)->Arg(32)->Arg(128)->Arg(256);

template <Matrix (*Sums)(const Matrix&)>
void BM_ColumnSums(benchmark::State& state) {
  const Matrix a = random_matrix(static_cast<std::size_t>(state.range(0)), 64, 3);
  for (auto _ : state) benchmark::DoNotOptimize(Sums(a));
}
BENCHMARK_TEMPLATE(BM_ColumnSums, kernels::serial::column_sums)->Arg(1024)->Arg(16384);
BENCHMARK_TEMPLATE(BM_ColumnSums, kernels::parallel::column_sums)->Arg(1024)->Arg(16384);

void BM_Jobs(benchmark::State& state) {
  std::vector<experiment::Job> jobs;
  for (std::size_t s = 0; s < 4; ++s) {
    experiment::Job j{experiment::benchmark_shift(45.0, s), experiment::benchmark_hyperparams(s)};
    j.hp.epochs = 5;
    jobs.push_back(j);
  }
  const bool parallel = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(experiment::run_jobs(jobs, parallel));
  state.SetLabel(parallel ? "parallel" : "serial");
}
BENCHMARK(BM_Jobs)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
