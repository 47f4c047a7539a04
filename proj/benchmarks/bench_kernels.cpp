#include <benchmark/benchmark.h>

#include "kkm/distributed.hpp"
#include "kkm/sequential.hpp"
#include "kkm/synthetic.hpp"

namespace {

kkm::DenseMatrix<double> blobs(std::size_t n, std::size_t d) {
  return kkm::generate_synthetic(kkm::SyntheticKind::blobs, n, d, 4, 3).points;
}

void BM_GemmNt(benchmark::State& state) {
  const auto p = blobs(static_cast<std::size_t>(state.range(0)), 16);
  for (auto _ : state) benchmark::DoNotOptimize(kkm::gemm_nt(p, p));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_GemmNt)->RangeMultiplier(2)->Range(64, 512)->Complexity();

void BM_Spmm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = blobs(n, 16);
  const auto k = kkm::gemm_nt(p, p);
  const auto v = kkm::build_assignment_matrix<double>(kkm::round_robin_init(n, 16), 16);
  for (auto _ : state) benchmark::DoNotOptimize(kkm::spmm(v, k, 0));
}
BENCHMARK(BM_Spmm)->RangeMultiplier(2)->Range(64, 512);

void BM_FitFull(benchmark::State& state) {
  const auto p = blobs(256, 8);
  kkm::FitConfig cfg;
  cfg.k = 4;
  for (auto _ : state) benchmark::DoNotOptimize(kkm::fit_full(p, cfg));
}
BENCHMARK(BM_FitFull);

void BM_Distributed(benchmark::State& state) {
  const auto algo = kkm::all_algorithms()[static_cast<std::size_t>(state.range(0))];
  const auto p = blobs(256, 8);
  kkm::FitConfig cfg;
  cfg.k = 4;
  for (auto _ : state) {
    benchmark::DoNotOptimize(kkm::run_clustering(algo, p, cfg, 4));
  }
  state.SetLabel(std::string(kkm::to_string(algo)));
}
BENCHMARK(BM_Distributed)->DenseRange(0, 3)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
