// Serial reference kernels against their OpenMP counterparts.
#include <benchmark/benchmark.h>

#include <vector>

#include "icc/constants.hpp"
#include "icc/diagnostics.hpp"
#include "icc/interactions.hpp"
#include "icc/rng.hpp"

namespace {

std::vector<icc::Vec3> random_cloud(std::size_t n) {
  icc::Rng rng(12345);
  std::vector<icc::Vec3> p(n);
  for (auto& r : p) r = {1e-4 * rng.uniform(), 1e-4 * rng.uniform(), 1e-4 * rng.uniform()};
  return p;
}

void BM_CoulombSerial(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = random_cloud(n);
  const std::vector<double> q(n, icc::PhysicalConstants::elementary_charge);
  std::vector<icc::Vec3> f(n);
  for (auto _ : state) {
    icc::coulomb_forces_serial(p, q, f);
    benchmark::DoNotOptimize(f.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(n * (n - 1) / 2));
}

void BM_CoulombParallel(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto p = random_cloud(n);
  const std::vector<double> q(n, icc::PhysicalConstants::elementary_charge);
  std::vector<icc::Vec3> f(n);
  for (auto _ : state) {
    icc::coulomb_forces_parallel(p, q, f);
    benchmark::DoNotOptimize(f.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(n * (n - 1) / 2));
}

std::vector<icc::Vec3> k_grid(std::size_t m) {
  std::vector<icc::Vec3> k(m);
  for (std::size_t i = 0; i < m; ++i) k[i] = {1e5 * static_cast<double>(i % 17), 1e5 * static_cast<double>(i % 5), 1e4 * static_cast<double>(i)};
  return k;
}

void BM_StructureFactorSerial(benchmark::State& state) {
  const auto p = random_cloud(static_cast<std::size_t>(state.range(0)));
  const auto k = k_grid(1024);
  for (auto _ : state) benchmark::DoNotOptimize(icc::structure_factor_serial(p, k));
}

void BM_StructureFactorParallel(benchmark::State& state) {
  const auto p = random_cloud(static_cast<std::size_t>(state.range(0)));
  const auto k = k_grid(1024);
  for (auto _ : state) benchmark::DoNotOptimize(icc::structure_factor_parallel(p, k));
}

}  // namespace

BENCHMARK(BM_CoulombSerial)->Arg(100)->Arg(1000)->Arg(5000);
BENCHMARK(BM_CoulombParallel)->Arg(100)->Arg(1000)->Arg(5000);
BENCHMARK(BM_StructureFactorSerial)->Arg(200)->Arg(2000);
BENCHMARK(BM_StructureFactorParallel)->Arg(200)->Arg(2000);

BENCHMARK_MAIN();
