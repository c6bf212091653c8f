#include "vigil/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vigil/error.hpp"

namespace vigil::stats {

double mean(std::span<const double> x) {
  if (x.empty()) throw ValidationError("mean of an empty sequence");
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

namespace {
double sum_sq_dev(std::span<const double> x) {
  const double m = mean(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s;
}
}  // namespace

double population_sd(std::span<const double> x) { return std::sqrt(sum_sq_dev(x) / static_cast<double>(x.size())); }

double sample_sd(std::span<const double> x) {
  if (x.size() < 2) throw ValidationError("sample sd needs at least two values");
  return std::sqrt(sum_sq_dev(x) / static_cast<double>(x.size() - 1));
}

namespace {

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw ValidationError("incomplete beta needs a, b > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (!(df > 0.0)) throw ValidationError("degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

double student_t_cdf(double t, double df) {
  const double tail = 0.5 * student_t_two_sided_p(t, df);
  return t >= 0.0 ? 1.0 - tail : tail;
}

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double normal_two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

double rmse(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size() || predicted.empty()) {
    throw ValidationError("rmse needs equal, non-empty sequences");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double e = predicted[i] - actual[i];
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(predicted.size()));
}

std::optional<double> pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ValidationError("correlation needs equal-length sequences");
  if (x.size() < 2) return std::nullopt;
  auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (constant(x) || constant(y)) return std::nullopt;
  const double mx = mean(x);
  const double my = mean(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

TTestResult paired_t(std::span<const double> pre, std::span<const double> post) {
  if (pre.size() != post.size()) throw ValidationError("paired t-test needs equal-length samples");
  if (pre.size() < 2) throw ValidationError("paired t-test needs at least two pairs");
  std::vector<double> d(pre.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = post[i] - pre[i];
  const double md = mean(d);
  const double sd = sample_sd(d);
  if (!(sd > 0.0)) throw ValidationError("paired differences have zero variance");
  TTestResult r;
  r.df = static_cast<int>(d.size()) - 1;
  r.t = md / (sd / std::sqrt(static_cast<double>(d.size())));
  r.p = student_t_two_sided_p(r.t, r.df);
  r.cohen_d = md / sd;
  return r;
}

double correlation_p(double r, std::size_t n) {
  if (n < 3) throw ValidationError("correlation p-value needs n >= 3");
  if (std::fabs(r) >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = r * std::sqrt(df / (1.0 - r * r));
  return student_t_two_sided_p(t, df);
}

CorrResult pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 3) throw ValidationError("pearson needs at least three points");
  const auto r = pearson_r(x, y);
  if (!r) throw ValidationError("pearson undefined: zero variance");
  return {*r, x.size(), correlation_p(*r, x.size())};
}

FdrResult bh_fdr(std::span<const double> p, double alpha) {
  const std::size_t m = p.size();
  for (double v : p) {
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("p-values must lie in [0, 1]");
  }
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  FdrResult out{std::vector<double>(m), std::vector<bool>(m)};
  double running = 1.0;
  for (std::size_t rank = m; rank-- > 0;) {
    const std::size_t i = order[rank];
    running = std::min(running, static_cast<double>(m) * p[i] / static_cast<double>(rank + 1));
    out.adjusted[i] = std::min(running, 1.0);
  }
  for (std::size_t i = 0; i < m; ++i) out.significant[i] = out.adjusted[i] <= alpha;
  return out;
}

}  // namespace vigil::stats
