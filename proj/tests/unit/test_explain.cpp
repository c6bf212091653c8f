#include <doctest.h>

#include <cmath>
#include <numeric>

#include "random_tree.hpp"
#include "vigil/connectivity.hpp"
#include "vigil/error.hpp"
#include "vigil/explain.hpp"
#include "vigil/synth.hpp"

using namespace vigil;

namespace {

TreeNode leaf(double value, std::int64_t cover) {
  TreeNode n;
  n.value = value;
  n.cover = cover;
  return n;
}

TreeNode split(int feature, double threshold, int left, int right, std::int64_t cover) {
  TreeNode n;
  n.feature = feature;
  n.threshold = threshold;
  n.left = left;
  n.right = right;
  n.cover = cover;
  return n;
}

}  // namespace

TEST_CASE("single leaf has no attribution") {
  const RegressionTree t({leaf(4.0, 10)});
  const auto s = tree_shap(t, std::vector<double>{1, 2});
  CHECK(s.base == 4.0);
  CHECK(s.phi == std::vector<double>{0, 0});
}

TEST_CASE("one split, equal covers") {
  const RegressionTree t({split(0, 0.5, 1, 2, 20), leaf(0.0, 10), leaf(1.0, 10)});
  const auto s = tree_shap(t, std::vector<double>{0.9});
  CHECK(s.base == 0.5);
  CHECK(s.phi[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("mirrored features share credit") {
  // f = [x0 > .5] + [x1 > .5], built as x0 first.
  const RegressionTree t({split(0, 0.5, 1, 4, 40), split(1, 0.5, 2, 3, 20), leaf(0, 10), leaf(1, 10),
                          split(1, 0.5, 5, 6, 20), leaf(1, 10), leaf(2, 10)});
  const auto s = tree_shap(t, std::vector<double>{0.9, 0.9});
  CHECK(s.phi[0] == doctest::Approx(s.phi[1]).epsilon(1e-14));
  CHECK(s.base + s.phi[0] + s.phi[1] == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("TreeSHAP matches brute-force Shapley on random trees") {
  Rng rng(2024);
  for (int k = 0; k < 150; ++k) {
    const int d = static_cast<int>(rng.uniform_int(1, 8));
    const auto tree = random_tree(rng, static_cast<int>(rng.uniform_int(1, 4)), d);
    const auto x = random_point(rng, d);
    const auto fast = tree_shap(tree, x);
    const auto slow = brute_shapley(tree, x);
    double sum = fast.base;
    for (int j = 0; j < d; ++j) {
      CHECK(std::abs(fast.phi[static_cast<std::size_t>(j)] - slow[static_cast<std::size_t>(j)]) < 1e-9);
      sum += fast.phi[static_cast<std::size_t>(j)];
    }
    CHECK(std::abs(sum - tree.predict(x)) < 1e-9);
  }
}

TEST_CASE("missing covers are rejected") {
  const RegressionTree t({split(0, 0.5, 1, 2, 0), leaf(0.0, 0), leaf(1.0, 0)});
  CHECK_THROWS_AS(tree_shap(t, std::vector<double>{0.1}), ValidationError);
}

TEST_CASE("forest SHAP") {
  Rng rng(5);
  const std::size_t n = 150, d = 6;
  FeatureMatrix x(n, d);
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d - 1; ++j) x(i, j) = rng.uniform();
    x(i, d - 1) = 0.0;  // never split on
    y[i] = 3 * x(i, 0) - 2 * x(i, 1) + 0.1 * rng.normal();
  }
  HyperParams p;
  p.n_estimators = 20;
  const auto f = fit_forest(x, y, p, 3);
  const auto shap = forest_shap(f, x);
  REQUIRE(shap.n_samples == n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = shap.row(i);
    CHECK(std::abs(shap.base_value + std::accumulate(row.begin(), row.end(), 0.0) - predict(f, x.row(i))) < 1e-9);
    CHECK(shap(i, d - 1) == 0.0);
  }

  Forest twin = f;
  twin.trees.assign(4, f.trees[0]);
  twin.params.n_estimators = 4;
  const auto ts = forest_shap(twin, x);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto single = tree_shap(f.trees[0], x.row(i));
    for (std::size_t j = 0; j < d; ++j) CHECK(ts(i, j) == doctest::Approx(single.phi[j]).epsilon(1e-12));
  }
  CHECK_THROWS_AS(forest_shap(f, FeatureMatrix(2, d + 1)), ValidationError);

  const auto top = top_k(shap, x, {}, 2);
  REQUIRE(top.size() == 2);
  CHECK(top[0].feature == 0);
  CHECK(top[1].feature == 1);
  CHECK(*top[0].direction_r > 0.9);
  CHECK(*top[1].direction_r < -0.9);
}

TEST_CASE("top-k ranking rules") {
  ShapMatrix s;
  s.n_samples = 4;
  s.n_features = 3;
  s.phi.assign(12, 0.0);
  FeatureMatrix x(4, 3);
  for (std::size_t i = 0; i < 4; ++i) {
    x(i, 0) = static_cast<double>(i);
    x(i, 1) = static_cast<double>(i * i);
    x(i, 2) = 1.0;
    s.phi[i * 3 + 1] = 0.5 * (x(i, 1) - 3.5);
  }
  auto r = top_k(s, x, {"a", "b", "c"}, 10);
  REQUIRE(r.size() == 3);
  CHECK(r[0].label == "b");
  CHECK(*r[0].direction_r == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r[1].feature == 0);  // tie at zero: lower index first
  CHECK_FALSE(r[2].direction_r);
  for (const auto& f : r) CHECK(f.mean_abs_shap >= 0.0);
}

TEST_CASE("regional table over the standard montage") {
  const auto& montage = Montage::standard30();
  const auto labels = montage.labels();
  ShapMatrix s;
  s.n_samples = 2;
  s.n_features = pair_count(labels.size());
  s.phi.assign(2 * s.n_features, 0.0);
  for (std::size_t k = 0; k < s.n_features; ++k) {
    s.phi[k] = static_cast<double>(k);
    s.phi[s.n_features + k] = -static_cast<double>(k);
  }
  const auto table = regional_table(s, labels, montage);
  REQUIRE(table.size() == 435);
  std::array<int, kRegionPairCount> counts{};
  for (const auto& o : table) {
    ++counts[o.region_pair.level()];
    CHECK(o.response == static_cast<double>(o.feature));
    if ((o.chan_a == "O1" && o.chan_b == "P7") || (o.chan_a == "P7" && o.chan_b == "O1")) {
      CHECK(o.region_pair.label() == "LT-O");
    }
    if ((o.chan_a == "F3" && o.chan_b == "F4") || (o.chan_a == "F4" && o.chan_b == "F3")) {
      CHECK(o.region_pair.label() == "F-F");
    }
  }
  CHECK(std::accumulate(counts.begin(), counts.end(), 0) == 435);
  for (int c : counts) CHECK(c > 0);

  auto unmapped = labels;
  unmapped[3] = "Zz";
  CHECK_THROWS_AS(regional_table(s, unmapped, montage), ValidationError);
  CHECK_THROWS_AS(regional_table(s, std::vector<std::string>(labels.begin(), labels.end() - 1), montage), ValidationError);
}
