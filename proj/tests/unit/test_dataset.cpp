#include <doctest.h>

#include <cmath>
#include <map>
#include <set>

#include "temp_dir.hpp"
#include "vigil/dataset.hpp"
#include "vigil/error.hpp"
#include "vigil/rng.hpp"

using namespace vigil;

namespace {

ParticipantFeatures participant(const std::string& id, int n_rows, int n_targets, std::size_t width, int lag = 0) {
  ParticipantFeatures p;
  p.id = id;
  for (int t = 1; t <= n_rows; ++t) {
    ConnectivityVector v;
    v.trial_index = t;
    v.lag_s = lag;
    v.values.assign(width, t * 0.01);
    p.rows.push_back(v);
  }
  for (int t = 1; t <= n_targets; ++t) p.targets.smoothed_rt_ms[t] = 300.0 + t;
  return p;
}

// Independent long-double reimplementation of the fold metrics.
long double ref_rmse(const std::vector<double>& a, const std::vector<double>& b) {
  long double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (static_cast<long double>(a[i]) - b[i]) * (static_cast<long double>(a[i]) - b[i]);
  return std::sqrt(s / a.size());
}

long double ref_r(const std::vector<double>& a, const std::vector<double>& b) {
  long double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= a.size();
  mb /= b.size();
  long double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

Dataset random_dataset(std::size_t participants, std::size_t per, std::uint64_t seed) {
  std::vector<ParticipantFeatures> parts;
  Rng rng(seed);
  for (std::size_t p = 0; p < participants; ++p) {
    ParticipantFeatures pf;
    pf.id = "P" + std::to_string(p);
    for (std::size_t t = 1; t <= per; ++t) {
      ConnectivityVector v;
      v.trial_index = static_cast<int>(t);
      v.values = {rng.normal(), rng.normal()};
      pf.targets.smoothed_rt_ms[static_cast<int>(t)] = 300 + 20 * v.values[0] + rng.normal();
      pf.rows.push_back(v);
    }
    parts.push_back(pf);
  }
  return assemble(parts, 0);
}

}  // namespace

TEST_CASE("assemble joins on trial index") {
  const std::vector<ParticipantFeatures> one{participant("A", 392, 350, 4)};
  const auto d = assemble(one, 0);
  CHECK(d.size() == 350);
  CHECK(d.x.cols() == 4);
  CHECK(d.keys[10].trial == 11);
  CHECK(d.y[10] == 311.0);
  CHECK(d.x(10, 0) == 0.11);

  const std::vector<ParticipantFeatures> two{participant("A", 100, 100, 3), participant("B", 100, 100, 3)};
  const auto pooled = assemble(two, 0);
  CHECK(pooled.size() == 200);
  CHECK(pooled.keys[150].participant == 1);
  CHECK(pooled.participants == std::vector<std::string>{"A", "B"});

  const std::vector<ParticipantFeatures> none{participant("A", 0, 10, 3)};
  CHECK(assemble(none, 0).empty());

  const std::vector<ParticipantFeatures> other_lag{participant("A", 10, 10, 3, 5)};
  CHECK(assemble(other_lag, 0).empty());
  CHECK(assemble(other_lag, 5).size() == 10);

  const std::vector<ParticipantFeatures> mismatch{participant("A", 10, 10, 3), participant("B", 10, 10, 4)};
  CHECK_THROWS_AS(assemble(mismatch, 0), ValidationError);
}

TEST_CASE("fold plans") {
  const std::vector<ParticipantFeatures> one{participant("A", 35, 35, 1)};
  const auto d = assemble(one, 0);
  const auto plan = make_folds(d, 10, 42);
  std::map<int, int> sizes;
  for (int f : plan.fold_of) ++sizes[f];
  std::multiset<int> counts;
  for (auto& [f, c] : sizes) counts.insert(c);
  CHECK(counts == std::multiset<int>{3, 3, 3, 3, 3, 4, 4, 4, 4, 4});
  CHECK(make_folds(d, 10, 42).fold_of == plan.fold_of);
  CHECK(make_folds(d, 10, 43).fold_of != plan.fold_of);
  CHECK_THROWS_AS(make_folds(d, 1, 42), ValidationError);

  for (std::size_t f = 0; f < 10; ++f) {
    const auto test = plan.test_indices(static_cast<int>(f));
    const auto train = plan.train_indices(static_cast<int>(f));
    CHECK(test.size() + train.size() == d.size());
    std::set<std::size_t> overlap(test.begin(), test.end());
    for (auto i : train) CHECK_FALSE(overlap.count(i));
  }
}

TEST_CASE("folds balance every participant") {
  std::vector<ParticipantFeatures> parts;
  for (int p = 0; p < 7; ++p) parts.push_back(participant("P" + std::to_string(p), 20 + 3 * p, 20 + 3 * p, 1));
  const auto d = assemble(parts, 0);
  for (bool contiguous : {false, true}) {
    const auto plan = make_folds(d, 10, 5, contiguous);
    std::vector<std::vector<int>> count(7, std::vector<int>(10, 0));
    for (std::size_t i = 0; i < d.size(); ++i) ++count[d.keys[i].participant][static_cast<std::size_t>(plan.fold_of[i])];
    for (const auto& c : count) {
      CHECK(*std::max_element(c.begin(), c.end()) - *std::min_element(c.begin(), c.end()) <= 1);
      CHECK(*std::min_element(c.begin(), c.end()) >= 1);
    }
  }
  // Contiguous blocks keep trial order within a participant.
  const auto plan = make_folds(d, 10, 5, true);
  for (std::size_t i = 1; i < 20; ++i) {
    const int a = plan.fold_of[i - 1];
    const int b = plan.fold_of[i];
    CHECK((a == b || b == (a + 1) % 10));
  }
}

TEST_CASE("evaluation metrics match an independent reimplementation") {
  const auto d = random_dataset(3, 40, 9);
  const auto plan = make_folds(d, 4, 2);
  Rng rng(3);
  std::map<int, std::vector<double>> preds;
  const FitPredict noisy = [&](const FeatureMatrix&, std::span<const double>, const FeatureMatrix& x_test, int fold) {
    std::vector<double> out;
    for (std::size_t i = 0; i < x_test.rows(); ++i) out.push_back(300 + 20 * x_test(i, 0) + rng.normal(0, 5));
    preds[fold] = out;
    return out;
  };
  const auto report = evaluate(d, plan, noisy);
  REQUIRE(report.folds.size() == 4);
  std::vector<double> rmses, rs;
  for (const auto& m : report.folds) {
    std::vector<double> y;
    for (auto i : plan.test_indices(m.fold)) y.push_back(d.y[i]);
    CHECK(std::abs(m.rmse - static_cast<double>(ref_rmse(preds[m.fold], y))) < 1e-10);
    REQUIRE(m.r);
    CHECK(std::abs(*m.r - static_cast<double>(ref_r(preds[m.fold], y))) < 1e-10);
    rmses.push_back(m.rmse);
    rs.push_back(*m.r);
  }
  double mean = 0;
  for (double v : rmses) mean += v / 4;
  double var = 0;
  for (double v : rmses) var += (v - mean) * (v - mean) / 4;
  CHECK(report.rmse_mean == doctest::Approx(mean).epsilon(1e-12));
  CHECK(report.rmse_sd == doctest::Approx(std::sqrt(var)).epsilon(1e-12));
}

TEST_CASE("perfect and constant predictors") {
  const auto d = random_dataset(2, 30, 4);
  const auto plan = make_folds(d, 3, 1);
  std::vector<double> lookup;
  const FitPredict oracle = [&](const FeatureMatrix&, std::span<const double>, const FeatureMatrix& x_test, int fold) {
    std::vector<double> out;
    for (auto i : plan.test_indices(fold)) out.push_back(d.y[i]);
    (void)x_test;
    return out;
  };
  const auto perfect = evaluate(d, plan, oracle);
  for (const auto& m : perfect.folds) {
    CHECK(m.rmse == 0.0);
    CHECK(*m.r == doctest::Approx(1.0).epsilon(1e-12));
  }
  const auto flat = evaluate(d, plan, mean_fit_predict());
  for (const auto& m : flat.folds) {
    CHECK_FALSE(m.r);
    CHECK_FALSE(m.note.empty());
  }
  CHECK(std::isnan(flat.r_mean));
}

TEST_CASE("tiny folds are rejected") {
  const auto d = random_dataset(1, 5, 1);
  const auto plan = make_folds(d, 3, 1);
  CHECK_THROWS_AS(evaluate(d, plan, mean_fit_predict()), ValidationError);
}

TEST_CASE("feature and target CSVs round-trip") {
  TempDir dir("ds");
  std::vector<ConnectivityVector> rows(2);
  rows[0] = {{0.1, 1.0 / 3.0}, 9, 2, 95.0};
  rows[1] = {{2e-17, 0.5}, 10, 2, 99.0};
  save_features_csv(dir / "f.csv", {"A-B", "A-C"}, rows);
  const auto table = load_features_csv(dir / "f.csv");
  CHECK(table.labels == std::vector<std::string>{"A-B", "A-C"});
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0].values == rows[0].values);
  CHECK(table.rows[1].values == rows[1].values);
  CHECK(table.rows[1].trial_index == 10);
  CHECK(table.rows[1].lag_s == 2);

  const auto targets = build_targets(EventLog({{1, 1.0, 400.0}, {2, 5.0, 90.0}, {3, 9.0, 421.5}}));
  save_targets_csv(dir / "t.csv", targets);
  const auto back = load_targets_csv(dir / "t.csv");
  CHECK(back.smoothed_rt_ms == targets.smoothed_rt_ms);
  REQUIRE(back.rows.size() == 3);
  CHECK(back.rows[1].outcome == TrialOutcome::false_alarm);
  CHECK(back.rows[1].rt_ms_raw == 90.0);
}
