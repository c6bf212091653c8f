#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vigil::stats {

/// One row of a model with a single categorical fixed factor and two
/// crossed random intercepts.
struct LmeObservation {
  std::size_t level = 0;   // fixed factor level, 0 is the reference
  std::size_t group1 = 0;  // first grouping factor
  std::size_t group2 = 0;  // second grouping factor
  double response = 0.0;
};

struct LmeOptions {
  /// Names of the fixed factor levels; size defines the level count.
  std::vector<std::string> level_names;
  /// Treat group1 and group2 as two memberships in one shared factor
  /// (a single variance component).
  bool merge_groups = false;
  int max_iterations = 1000;
  double f_tolerance = 1e-10;
  double x_tolerance = 1e-6;
  /// Skip the optimizer and fit at these relative standard deviations
  /// (random-effect sd / residual sd). Test hook.
  std::optional<std::array<double, 2>> fixed_ratios;
};

struct LmeFit {
  std::vector<std::string> level_names;
  std::vector<std::string> coef_names;  // "(Intercept)" then one per non-reference level
  std::vector<double> beta;
  std::vector<double> beta_cov;  // row-major, beta.size()^2
  std::vector<double> ratios;    // relative sd per variance component
  double var_group1 = 0.0;
  double var_group2 = 0.0;       // zero when groups are merged
  double sigma2_resid = 0.0;
  double reml_deviance = 0.0;
  bool converged = false;
  int iterations = 0;
  std::size_t n_obs = 0;
  std::size_t n_random = 0;
  /// Best REML deviance after each optimizer iteration.
  std::vector<double> deviance_trace;

  double se(std::size_t i) const;
};

/// REML fit: the fixed effects and residual variance are profiled out and
/// the variance ratios are optimized on a log scale by Nelder-Mead.
/// Throws ValidationError on rank deficiency or < 2 levels per grouping factor.
LmeFit fit_lme(std::span<const LmeObservation> obs, const LmeOptions& options);

struct EmmRow {
  std::string level;
  double emm = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
  double p_fdr = 1.0;
  bool significant = false;
};

/// Estimated marginal mean per level (intercept + level effect) with a Wald
/// z-test and BH-FDR across levels. Throws for an unconverged fit.
std::vector<EmmRow> emm_table(const LmeFit& fit, double alpha = 0.05);

/// Significance stars: * < .05, ** < .01, *** < .001.
std::string stars(double p);

}  // namespace vigil::stats
