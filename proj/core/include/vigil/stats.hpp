#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

namespace vigil::stats {

double mean(std::span<const double> x);
/// Population (divisor n) standard deviation.
double population_sd(std::span<const double> x);
/// Sample (divisor n - 1) standard deviation.
double sample_sd(std::span<const double> x);

/// Regularized incomplete beta I_x(a, b), continued-fraction evaluation.
double incomplete_beta(double a, double b, double x);

/// Student t cumulative distribution.
double student_t_cdf(double t, double df);
/// Two-sided p-value P(|T| >= |t|).
double student_t_two_sided_p(double t, double df);

double normal_cdf(double z);
double normal_two_sided_p(double z);

/// Root mean squared difference; sizes must match and be non-empty.
double rmse(std::span<const double> predicted, std::span<const double> actual);

/// Product-moment correlation, or nullopt when either side has zero
/// variance or fewer than two points.
std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y);

struct TTestResult {
  double t = 0.0;
  int df = 0;
  double p = 1.0;  // two-sided
  double cohen_d = 0.0;
};

/// Paired samples t-test on d = post - pre.
TTestResult paired_t(std::span<const double> pre, std::span<const double> post);

struct CorrResult {
  double r = 0.0;
  std::size_t n = 0;
  double p = 1.0;  // two-sided
};

/// p-value for a correlation r over n points: t = r sqrt((n-2)/(1-r^2)).
double correlation_p(double r, std::size_t n);

CorrResult pearson(std::span<const double> x, std::span<const double> y);

struct FdrResult {
  std::vector<double> adjusted;  // input order
  std::vector<bool> significant;
};

/// Benjamini-Hochberg step-up adjustment.
FdrResult bh_fdr(std::span<const double> p_values, double alpha = 0.05);

}  // namespace vigil::stats
