#include <benchmark/benchmark.h>

#include <vigil/connectivity.hpp>
#include <vigil/explain.hpp>
#include <vigil/forest.hpp>
#include <vigil/rng.hpp>

#include <numeric>
#include <vector>

namespace {

using namespace vigil;

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

// x: n x p standard normal, y: sparse linear signal plus noise
void make_regression(std::size_t n, std::size_t p, FeatureMatrix& x, std::vector<double>& y) {
  x = FeatureMatrix(n, p, noise(n * p, 11));
  y.assign(n, 0.0);
  Rng rng(12);
  for (std::size_t i = 0; i < n; ++i) y[i] = x(i, 0) + 0.5 * x(i, 1) * x(i, 2) + 0.3 * rng.normal();
}

void BM_EpochMi(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = noise(n, 1), b = noise(n, 2);
  for (auto _ : state) benchmark::DoNotOptimize(epoch_mi(a, b, 8));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_EpochMi)->Arg(100)->Arg(250)->Arg(1000);

void BM_FitTree(benchmark::State& state) {
  FeatureMatrix x;
  std::vector<double> y;
  make_regression(static_cast<std::size_t>(state.range(0)), 435, x, y);
  std::vector<std::size_t> rows(x.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  const auto params = HyperParams::paper_tuned();
  Rng rng(3);
  for (auto _ : state) benchmark::DoNotOptimize(fit_tree(x, y, rows, params, rng));
}
BENCHMARK(BM_FitTree)->Arg(1000)->Arg(4000)->Unit(benchmark::kMillisecond);

void BM_ForestShap(benchmark::State& state) {
  FeatureMatrix x;
  std::vector<double> y;
  make_regression(2000, 435, x, y);
  auto params = HyperParams::paper_tuned();
  params.n_estimators = 10;
  const Forest forest = fit_forest(x, y, params, 5);
  const std::size_t m = static_cast<std::size_t>(state.range(0));
  FeatureMatrix sample(m, x.cols());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) sample(i, j) = x(i, j);
  for (auto _ : state) benchmark::DoNotOptimize(forest_shap(forest, sample));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(m));
}
BENCHMARK(BM_ForestShap)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
