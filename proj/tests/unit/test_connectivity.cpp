#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vigil/connectivity.hpp"
#include "vigil/error.hpp"
#include "vigil/rng.hpp"

using namespace vigil;

namespace {

// Entropy of the label distribution: I(X;X) = H(X).
double label_entropy(std::span<const double> x, int bins) {
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  for (auto l : quantile_bins(x, bins)) counts[l] += 1.0;
  double h = 0.0;
  for (double c : counts) {
    const double p = c / static_cast<double>(x.size());
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (auto& v : x) v = rng.normal();
  return x;
}

}  // namespace

TEST_CASE("pair index is a bijection") {
  CHECK(pair_count(30) == 435);
  CHECK(pair_index(0, 1, 30) == 0);
  CHECK(pair_index(28, 29, 30) == 434);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < 30; ++i) {
    for (std::size_t j = i + 1; j < 30; ++j) {
      const auto k = pair_index(i, j, 30);
      CHECK(k == expected++);
      CHECK(unpair(k, 30) == std::make_pair(i, j));
    }
  }
  CHECK_THROWS_AS(pair_index(3, 3, 30), ValidationError);
  CHECK_THROWS_AS(pair_index(4, 3, 30), ValidationError);
  CHECK_THROWS_AS(pair_index(3, 30, 30), ValidationError);
  CHECK(pair_labels({"A", "B", "C"}) == std::vector<std::string>{"A-B", "A-C", "B-C"});
}

TEST_CASE("quantile bins") {
  SUBCASE("one value per bin") {
    const std::vector<double> x{5, 1, 7, 3, 2, 8, 6, 4};
    const auto b = quantile_bins(x, 8);
    std::vector<int> sorted(b.begin(), b.end());
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 8; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);
    CHECK(b[0] == 4);
    CHECK(b[1] == 0);
  }
  SUBCASE("500 samples give 62 or 63 per bin") {
    const auto b = quantile_bins(noise(500, 1), 8);
    std::array<int, 8> counts{};
    for (auto v : b) ++counts[v];
    for (int c : counts) CHECK((c == 62 || c == 63));
  }
  SUBCASE("monotone transforms leave labels unchanged") {
    const auto x = noise(300, 2);
    std::vector<double> y(x.size());
    std::transform(x.begin(), x.end(), y.begin(), [](double v) { return std::exp(3 * v) + 1; });
    CHECK(quantile_bins(x, 8) == quantile_bins(y, 8));
  }
  SUBCASE("ties follow original order") {
    const std::vector<double> x{1, 1, 1, 1};
    CHECK(quantile_bins(x, 2) == std::vector<std::uint16_t>{0, 0, 1, 1});
  }
  CHECK_THROWS_AS(quantile_bins(std::vector<double>{1, 2, 3}, 4), ValidationError);
  CHECK_THROWS_AS(quantile_bins(std::vector<double>{1, 2, 3}, 1), ValidationError);
  CHECK_THROWS_AS(quantile_bins(std::vector<double>{1, NAN, 3}, 2), ValidationError);
}

TEST_CASE("mutual information of joint tables") {
  CHECK(mi_from_joint(JointHistogram(2, {50, 0, 0, 50})) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(std::abs(mi_from_joint(JointHistogram(2, {6, 2, 3, 1}))) < 1e-15);
  CHECK(mi_from_joint(JointHistogram(2, {4, 1, 1, 4})) == doctest::Approx(0.19274).epsilon(1e-4));
  CHECK_THROWS_AS(JointHistogram(2, {1, 2, 3}), ValidationError);
  CHECK_THROWS_AS(JointHistogram(2, {0, 0, 0, 0}), ValidationError);
}

TEST_CASE("epoch MI") {
  const auto x = noise(500, 3);
  const auto y = noise(500, 4);
  CHECK(epoch_mi(x, x, 8) == doctest::Approx(label_entropy(x, 8)).epsilon(1e-12));
  CHECK(epoch_mi(x, x, 8) == doctest::Approx(std::log(8.0)).epsilon(1e-4));
  CHECK(epoch_mi(x, y, 8) == epoch_mi(y, x, 8));
  for (std::uint64_t s = 0; s < 20; ++s) {
    const double mi = epoch_mi(noise(500, 100 + s), noise(500, 200 + s), 8);
    CHECK(mi >= 0.0);
    CHECK(mi < 0.10);
  }
  CHECK_THROWS_AS(epoch_mi(x, std::span<const double>(y).first(499), 8), ValidationError);
}

TEST_CASE("window features average epoch MIs") {
  const double rate = 100.0;
  const std::size_t n = 1000;
  auto a = noise(n, 5);
  auto b = noise(n, 6);
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = a[i] + 0.5 * b[i];
  std::vector<double> s;
  s.insert(s.end(), a.begin(), a.end());
  s.insert(s.end(), a.begin(), a.end());
  s.insert(s.end(), c.begin(), c.end());
  const Recording rec("p", {"A", "A2", "C"}, rate, s);
  WindowSpec spec;
  const auto v = window_features(rec, 7.0, spec);
  REQUIRE(v.values.size() == 3);
  double entropy = 0.0;
  for (int e = 0; e < 5; ++e) entropy += label_entropy(std::span<const double>(a).subspan(static_cast<std::size_t>(200 + 100 * e), 100), 8);
  CHECK(v.values[0] == doctest::Approx(entropy / 5).epsilon(1e-12));
  double expected = 0.0;
  for (int e = 0; e < 5; ++e) {
    const auto first = static_cast<std::size_t>(200 + 100 * e);
    expected += epoch_mi(std::span<const double>(a).subspan(first, 100), std::span<const double>(c).subspan(first, 100), 8);
  }
  CHECK(v.values[1] == doctest::Approx(expected / 5).epsilon(1e-12));
  for (double m : v.values) {
    CHECK(m >= 0.0);
    CHECK(m <= std::log(8.0) + 1e-12);
  }
  CHECK_THROWS_AS(window_features(rec, 4.0, spec), ValidationError);
  CHECK_THROWS_AS(window_features(rec, 10.5, spec), ValidationError);
}

TEST_CASE("window features are invariant to monotone channel transforms") {
  const std::size_t n = 800;
  auto a = noise(n, 7);
  auto b = noise(n, 8);
  for (std::size_t i = 0; i < n; ++i) b[i] += a[i];
  std::vector<double> s(a);
  s.insert(s.end(), b.begin(), b.end());
  std::vector<double> t(s);
  for (std::size_t i = 0; i < n; ++i) t[i] = 3 * t[i] + 1;
  for (std::size_t i = n; i < 2 * n; ++i) t[i] = std::tanh(t[i]);
  const Recording r1("p", {"A", "B"}, 100, s);
  const Recording r2("p", {"A", "B"}, 100, t);
  CHECK(window_features(r1, 6.0, {}).values == window_features(r2, 6.0, {}).values);
}

TEST_CASE("Miller-Madow correction raises the estimate") {
  const auto x = noise(500, 9);
  const auto y = noise(500, 10);
  std::vector<double> s(x);
  s.insert(s.end(), y.begin(), y.end());
  const Recording rec("p", {"A", "B"}, 100, s);
  WindowSpec plain;
  WindowSpec corrected;
  corrected.bias_correction = true;
  CHECK(window_features(rec, 5.0, corrected).values[0] >= window_features(rec, 5.0, plain).values[0]);
}

TEST_CASE("lagged extraction windows and skips") {
  const double rate = 50.0;
  const std::size_t n = static_cast<std::size_t>(130 * rate);
  auto s = noise(2 * n, 11);
  const Recording rec("p", {"A", "B"}, rate, s);
  std::vector<Trial> trials;
  for (int i = 1; i <= 10; ++i) trials.push_back({i, 10.0 * i, 300.0});
  trials.push_back({11, 129.0, 300.0});
  const EventLog log(trials);
  WindowSpec spec;
  spec.lag_s = 3;
  const auto out = extract_lagged(rec, log, spec);
  REQUIRE(out.rows.size() == 3);
  CHECK(out.rows[0].trial_index == 9);
  CHECK(out.rows[0].window_end_s == 87.0);
  CHECK(out.rows[1].window_end_s == 97.0);
  CHECK(out.rows[1].lag_s == 3);
  CHECK(out.skipped == 0);
  const auto again = window_features(rec, 97.0, spec);
  CHECK(again.values == out.rows[1].values);

  spec.lag_s = 0;
  const auto zero = extract_lagged(rec, log, spec);
  CHECK(zero.rows[1].window_end_s == 100.0);

  // Trial 9 window would start before zero.
  const EventLog early({{1, 0.5, 300.0}, {2, 1.0, 300.0}, {3, 1.5, 300.0}, {4, 2.0, 300.0}, {5, 2.5, 300.0},
                        {6, 3.0, 300.0}, {7, 3.5, 300.0}, {8, 4.0, 300.0}, {9, 4.5, 300.0}, {10, 140.0, 300.0}});
  const auto skipped = extract_lagged(rec, early, spec);
  CHECK(skipped.rows.empty());
  CHECK(skipped.skipped == 2);
}

TEST_CASE("window spec validation") {
  WindowSpec w;
  CHECK_NOTHROW(w.validate());
  w.window_len_s = 5;
  w.epoch_len_s = 2;
  CHECK_THROWS_AS(w.validate(), ValidationError);
  w = {};
  w.lag_s = -1;
  CHECK_THROWS_AS(w.validate(), ValidationError);
  w = {};
  w.n_bins = 1;
  CHECK_THROWS_AS(w.validate(), ValidationError);
}
