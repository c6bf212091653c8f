#include <doctest.h>

#include "vigil/behavior.hpp"
#include "vigil/rng.hpp"

using namespace vigil;

TEST_CASE("trial classification") {
  CHECK(classify_trial(95.0) == TrialOutcome::false_alarm);
  CHECK(classify_trial(520.0) == TrialOutcome::lapse);
  CHECK(classify_trial(350.0) == TrialOutcome::valid);
  CHECK(classify_trial(100.0) == TrialOutcome::valid);
  CHECK(classify_trial(500.0) == TrialOutcome::valid);
  CHECK(classify_trial(99.999) == TrialOutcome::false_alarm);
  CHECK(classify_trial(500.001) == TrialOutcome::lapse);
  CHECK(classify_trial(std::nullopt) == TrialOutcome::timeout);
  CHECK(outcome_name(TrialOutcome::lapse) == "lapse");
}

TEST_CASE("trailing moving average") {
  const std::vector<double> x{300, 310, 320, 330, 340, 350};
  const auto s = smooth_rt(x);
  REQUIRE(s.size() == 6);
  CHECK(s[0] == 300);
  CHECK(s[1] == 305);
  CHECK(s[4] == 320);
  CHECK(s[5] == 330);
  CHECK(smooth_rt(std::vector<double>{}).empty());
  const auto c = smooth_rt(std::vector<double>(9, 250.0));
  for (double v : c) CHECK(v == 250.0);
}

TEST_CASE("smoothing is shift-equivariant and causal") {
  Rng rng(1);
  std::vector<double> x(40);
  for (auto& v : x) v = rng.uniform(100, 500);
  std::vector<double> shifted(x);
  for (auto& v : shifted) v += 17.0;
  const auto a = smooth_rt(x);
  const auto b = smooth_rt(shifted);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(b[i] == doctest::Approx(a[i] + 17.0).epsilon(1e-12));
  std::vector<double> altered(x);
  altered[30] = 499;
  const auto c = smooth_rt(altered);
  for (std::size_t i = 0; i < 30; ++i) CHECK(c[i] == a[i]);
  for (double v : a) {
    CHECK(v >= 100);
    CHECK(v <= 500);
  }
}

TEST_CASE("targets exclude before smoothing") {
  const EventLog log({{1, 1.0, 400.0}, {2, 5.0, 90.0}, {3, 9.0, 420.0}, {4, 13.0, std::nullopt}, {5, 17.0, 700.0}});
  const auto t = build_targets(log);
  REQUIRE(t.size() == 2);
  CHECK(t.smoothed_rt_ms.at(1) == 400.0);
  CHECK(t.smoothed_rt_ms.at(3) == 410.0);
  CHECK_FALSE(t.smoothed_rt_ms.count(2));
  REQUIRE(t.rows.size() == 5);
  CHECK(t.rows[1].outcome == TrialOutcome::false_alarm);
  CHECK(t.rows[3].outcome == TrialOutcome::timeout);
  CHECK(t.rows[4].outcome == TrialOutcome::lapse);
  CHECK_FALSE(t.rows[4].rt_ms_smoothed);
  CHECK(t.rows[2].rt_ms_smoothed == 410.0);

  const auto none = build_targets(EventLog({{1, 1.0, std::nullopt}, {2, 3.0, std::nullopt}}));
  CHECK(none.empty());
}
