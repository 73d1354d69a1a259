// Serial reference vs OpenMP path for the pairwise kernels.

#include "dml/kernels.hpp"

#include <benchmark/benchmark.h>

#include <random>

namespace {

using dml::Matrix;
using dml::kernels::Exec;

Matrix unit_rows(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Matrix m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) m(i, k) = g(rng);
    m.row(i).normalize();
  }
  return m;
}

dml::Labels labels_for(Eigen::Index n) {
  dml::Labels y(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = static_cast<int>(i / 4);
  return y;
}

Exec exec_of(const benchmark::State& s) { return s.range(1) == 0 ? Exec::serial : Exec::parallel; }

void BM_Gram(benchmark::State& state) {
  const Matrix a = unit_rows(state.range(0), 128, 1);
  Matrix out;
  for (auto _ : state) {
    dml::kernels::gram(a, a, out, exec_of(state));
    benchmark::DoNotOptimize(out.data());
  }
}

void BM_Contrastive(benchmark::State& state) {
  const Eigen::Index n = 64;
  const Matrix z = unit_rows(n, 128, 2);
  const Matrix mem = unit_rows(state.range(0), 128, 3);
  const auto y = labels_for(n);
  const auto my = labels_for(state.range(0));
  for (auto _ : state) {
    auto rows = dml::kernels::contrastive_rows(z, y, mem, my, 0.5, exec_of(state));
    benchmark::DoNotOptimize(rows.grad.data());
  }
}

void BM_NearestNeighbors(benchmark::State& state) {
  const Matrix z = unit_rows(state.range(0), 128, 4);
  for (auto _ : state) benchmark::DoNotOptimize(dml::kernels::nearest_neighbors(z, exec_of(state)));
}

void BM_Rank(benchmark::State& state) {
  const Matrix g = unit_rows(state.range(0), 128, 5);
  for (auto _ : state)
    benchmark::DoNotOptimize(dml::kernels::rank_all(g, g, true, exec_of(state)));
}

}  // namespace

BENCHMARK(BM_Gram)->ArgsProduct({{256, 1024}, {0, 1}});
BENCHMARK(BM_Contrastive)->ArgsProduct({{0, 1024, 8192}, {0, 1}});
BENCHMARK(BM_NearestNeighbors)->ArgsProduct({{64, 512}, {0, 1}});
BENCHMARK(BM_Rank)->ArgsProduct({{256, 1024}, {0, 1}});

BENCHMARK_MAIN();
