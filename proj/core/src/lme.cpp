#include "vigil/lme.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include <Eigen/Dense>

#include "vigil/error.hpp"
#include "vigil/stats.hpp"

namespace vigil::stats {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kLogRatioFloor = -20.0;
constexpr double kLogRatioCeil = 10.0;

// Cross-products of the design; every deviance evaluation works on these
// (q + p)-sized blocks instead of the n-row data.
struct Design {
  std::size_t n = 0;
  std::size_t p = 0;
  std::size_t q = 0;
  std::vector<int> component_of;  // random-effect column -> variance component
  int n_components = 0;
  MatrixXd ztz, ztx, xtx;
  VectorXd zty, xty;
  double yty = 0.0;
};

struct Evaluation {
  double deviance = std::numeric_limits<double>::infinity();
  VectorXd beta;
  MatrixXd beta_cov;
  double sigma2 = 0.0;
};

Evaluation evaluate(const Design& d, std::span<const double> ratios) {
  const auto q = static_cast<Eigen::Index>(d.q);
  const auto p = static_cast<Eigen::Index>(d.p);
  VectorXd lambda(q);
  for (Eigen::Index j = 0; j < q; ++j) lambda[j] = ratios[static_cast<std::size_t>(d.component_of[static_cast<std::size_t>(j)])];

  MatrixXd m(q + p, q + p);
  m.topLeftCorner(q, q) = lambda.asDiagonal() * d.ztz * lambda.asDiagonal();
  m.topLeftCorner(q, q).diagonal().array() += 1.0;
  m.topRightCorner(q, p) = lambda.asDiagonal() * d.ztx;
  m.bottomLeftCorner(p, q) = m.topRightCorner(q, p).transpose();
  m.bottomRightCorner(p, p) = d.xtx;

  Eigen::LLT<MatrixXd> llt(m);
  Evaluation ev;
  if (llt.info() != Eigen::Success) return ev;
  const MatrixXd& l = llt.matrixLLT();

  VectorXd rhs(q + p);
  rhs.head(q) = lambda.asDiagonal() * d.zty;
  rhs.tail(p) = d.xty;
  const VectorXd sol = llt.solve(rhs);
  const double r2 = d.yty - sol.dot(rhs);
  const double dof = static_cast<double>(d.n - d.p);
  if (!(r2 > 0.0)) return ev;

  double logdet_l = 0.0;
  for (Eigen::Index j = 0; j < q; ++j) logdet_l += 2.0 * std::log(l(j, j));
  double logdet_rx = 0.0;
  for (Eigen::Index j = q; j < q + p; ++j) logdet_rx += 2.0 * std::log(l(j, j));

  ev.deviance = logdet_l + logdet_rx + dof * (1.0 + std::log(2.0 * std::numbers::pi * r2 / dof));
  ev.sigma2 = r2 / dof;
  ev.beta = sol.tail(p);
  const MatrixXd inv = llt.solve(MatrixXd::Identity(q + p, q + p));
  ev.beta_cov = ev.sigma2 * inv.bottomRightCorner(p, p);
  return ev;
}

struct Simplex {
  std::vector<VectorXd> x;
  std::vector<double> f;
};

}  // namespace

double LmeFit::se(std::size_t i) const {
  const std::size_t p = beta.size();
  return std::sqrt(beta_cov[i * p + i]);
}

LmeFit fit_lme(std::span<const LmeObservation> obs, const LmeOptions& options) {
  const std::size_t n_levels = options.level_names.size();
  if (n_levels < 1) throw ValidationError("LME needs at least one fixed-factor level");
  if (obs.empty()) throw ValidationError("LME needs observations");

  // Compress grouping factors to observed levels, in first-seen order of
  // sorted ids so the layout is independent of row order.
  std::map<std::size_t, std::size_t> g1, g2;
  for (const auto& o : obs) {
    if (o.level >= n_levels) throw ValidationError("observation level out of range");
    if (!std::isfinite(o.response)) throw ValidationError("observation response is not finite");
    if (options.merge_groups) {
      g1.emplace(o.group1, 0);
      g1.emplace(o.group2, 0);
    } else {
      g1.emplace(o.group1, 0);
      g2.emplace(o.group2, 0);
    }
  }
  std::size_t next = 0;
  for (auto& [id, col] : g1) col = next++;
  const std::size_t q1 = next;
  for (auto& [id, col] : g2) col = next++;
  const std::size_t q = next;
  if (q1 < 2 || (!options.merge_groups && q - q1 < 2)) {
    throw ValidationError("each grouping factor needs at least two levels");
  }

  Design d;
  d.n = obs.size();
  d.p = n_levels;
  d.q = q;
  d.n_components = options.merge_groups ? 1 : 2;
  d.component_of.assign(q, 0);
  for (std::size_t j = q1; j < q; ++j) d.component_of[j] = 1;
  if (d.n <= d.p) throw ValidationError("LME needs more observations than fixed effects");

  const auto n = static_cast<Eigen::Index>(d.n);
  MatrixXd x = MatrixXd::Zero(n, static_cast<Eigen::Index>(d.p));
  MatrixXd z = MatrixXd::Zero(n, static_cast<Eigen::Index>(q));
  VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& o = obs[static_cast<std::size_t>(i)];
    x(i, 0) = 1.0;
    if (o.level > 0) x(i, static_cast<Eigen::Index>(o.level)) = 1.0;
    if (options.merge_groups) {
      z(i, static_cast<Eigen::Index>(g1.at(o.group1))) += 1.0;
      z(i, static_cast<Eigen::Index>(g1.at(o.group2))) += 1.0;
    } else {
      z(i, static_cast<Eigen::Index>(g1.at(o.group1))) = 1.0;
      z(i, static_cast<Eigen::Index>(g2.at(o.group2))) = 1.0;
    }
    y[i] = o.response;
  }
  d.xtx = x.transpose() * x;
  Eigen::FullPivLU<MatrixXd> rank_check(d.xtx);
  if (rank_check.rank() < static_cast<Eigen::Index>(d.p)) throw ValidationError("fixed-effect design is rank deficient");
  d.ztz = z.transpose() * z;
  d.ztx = z.transpose() * x;
  d.zty = z.transpose() * y;
  d.xty = x.transpose() * y;
  d.yty = y.squaredNorm();

  const int k = d.n_components;
  std::vector<double> ratios(static_cast<std::size_t>(k), 0.0);
  LmeFit fit;
  fit.n_obs = d.n;
  fit.n_random = d.q;

  auto to_ratios = [&](const VectorXd& v) {
    std::vector<double> r(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) r[static_cast<std::size_t>(c)] = std::exp(std::clamp(v[c], kLogRatioFloor, kLogRatioCeil));
    return r;
  };

  if (options.fixed_ratios) {
    for (int c = 0; c < k; ++c) ratios[static_cast<std::size_t>(c)] = (*options.fixed_ratios)[static_cast<std::size_t>(c)];
    fit.converged = true;
  } else {
    // Nelder-Mead on log ratios.
    auto objective = [&](const VectorXd& v) { return evaluate(d, to_ratios(v)).deviance; };
    Simplex s;
    s.x.push_back(VectorXd::Zero(k));
    for (int c = 0; c < k; ++c) {
      VectorXd v = VectorXd::Zero(k);
      v[c] = -1.0;
      s.x.push_back(v);
    }
    for (const auto& v : s.x) s.f.push_back(objective(v));
    const std::size_t nv = s.x.size();
    int iter = 0;
    for (; iter < options.max_iterations; ++iter) {
      std::vector<std::size_t> idx(nv);
      for (std::size_t i = 0; i < nv; ++i) idx[i] = i;
      std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return s.f[a] < s.f[b]; });
      Simplex sorted;
      for (auto i : idx) {
        sorted.x.push_back(s.x[i]);
        sorted.f.push_back(s.f[i]);
      }
      s = std::move(sorted);
      fit.deviance_trace.push_back(s.f.front());

      const double spread = s.f.back() - s.f.front();
      double diameter = 0.0;
      for (std::size_t i = 1; i < nv; ++i) diameter = std::max(diameter, (s.x[i] - s.x[0]).cwiseAbs().maxCoeff());
      const double scale = 1.0 + std::fabs(s.f.front());
      if (std::isfinite(spread) &&
          ((spread <= options.f_tolerance * scale && diameter <= options.x_tolerance) || spread <= 1e-13 * scale)) {
        fit.converged = true;
        break;
      }

      VectorXd centroid = VectorXd::Zero(k);
      for (std::size_t i = 0; i + 1 < nv; ++i) centroid += s.x[i];
      centroid /= static_cast<double>(nv - 1);
      const VectorXd& worst = s.x.back();
      const VectorXd xr = centroid + (centroid - worst);
      const double fr = objective(xr);
      if (fr < s.f.front()) {
        const VectorXd xe = centroid + 2.0 * (centroid - worst);
        const double fe = objective(xe);
        if (fe < fr) {
          s.x.back() = xe;
          s.f.back() = fe;
        } else {
          s.x.back() = xr;
          s.f.back() = fr;
        }
      } else if (fr < s.f[nv - 2]) {
        s.x.back() = xr;
        s.f.back() = fr;
      } else {
        const bool outside = fr < s.f.back();
        const VectorXd xc = outside ? VectorXd(centroid + 0.5 * (xr - centroid)) : VectorXd(centroid + 0.5 * (worst - centroid));
        const double fc = objective(xc);
        if (fc < std::min(fr, s.f.back())) {
          s.x.back() = xc;
          s.f.back() = fc;
        } else {
          for (std::size_t i = 1; i < nv; ++i) {
            s.x[i] = s.x[0] + 0.5 * (s.x[i] - s.x[0]);
            s.f[i] = objective(s.x[i]);
          }
        }
      }
    }
    fit.iterations = iter;
    std::size_t best = 0;
    for (std::size_t i = 1; i < nv; ++i) {
      if (s.f[i] < s.f[best]) best = i;
    }
    ratios = to_ratios(s.x[best]);
  }

  const Evaluation ev = evaluate(d, ratios);
  if (!std::isfinite(ev.deviance)) throw std::runtime_error("LME deviance is not finite at the solution");
  fit.reml_deviance = ev.deviance;
  fit.sigma2_resid = ev.sigma2;
  fit.ratios = ratios;
  fit.var_group1 = ev.sigma2 * ratios[0] * ratios[0];
  fit.var_group2 = k > 1 ? ev.sigma2 * ratios[1] * ratios[1] : 0.0;
  fit.level_names = options.level_names;
  fit.coef_names.push_back("(Intercept)");
  for (std::size_t l = 1; l < n_levels; ++l) fit.coef_names.push_back(options.level_names[l]);
  fit.beta.assign(ev.beta.data(), ev.beta.data() + ev.beta.size());
  fit.beta_cov.resize(d.p * d.p);
  for (std::size_t i = 0; i < d.p; ++i) {
    for (std::size_t j = 0; j < d.p; ++j) {
      fit.beta_cov[i * d.p + j] = ev.beta_cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  if (!fit.converged) {
    // Estimates from a fit that hit the iteration cap are not reported.
    fit.beta.clear();
    fit.beta_cov.clear();
  }
  return fit;
}

std::vector<EmmRow> emm_table(const LmeFit& fit, double alpha) {
  if (!fit.converged || fit.beta.empty()) throw ValidationError("EMMs need a converged LME fit");
  const std::size_t p = fit.beta.size();
  std::vector<EmmRow> rows;
  std::vector<double> pvals;
  for (std::size_t level = 0; level < p; ++level) {
    EmmRow row;
    row.level = fit.level_names[level];
    double var = fit.beta_cov[0];
    row.emm = fit.beta[0];
    if (level > 0) {
      row.emm += fit.beta[level];
      var += fit.beta_cov[level * p + level] + 2.0 * fit.beta_cov[level];
    }
    row.se = std::sqrt(std::max(var, 0.0));
    row.z = row.emm / row.se;
    row.p = normal_two_sided_p(row.z);
    pvals.push_back(row.p);
    rows.push_back(row);
  }
  const auto fdr = bh_fdr(pvals, alpha);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].p_fdr = fdr.adjusted[i];
    rows[i].significant = fdr.significant[i];
  }
  return rows;
}

std::string stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

}  // namespace vigil::stats
