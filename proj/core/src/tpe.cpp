#include "vigil/tpe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "vigil/error.hpp"

namespace vigil {

void SearchSpace::validate() const {
  if (max_features.empty()) throw ValidationError("search space has no max_features choices");
  if (min_samples_leaf_lo < 1 || min_samples_leaf_hi < min_samples_leaf_lo) {
    throw ValidationError("min_samples_leaf range must satisfy 1 <= lo <= hi");
  }
  if (max_depth_lo < 1 || max_depth_hi < max_depth_lo) {
    throw ValidationError("max_depth range must satisfy 1 <= lo <= hi");
  }
}

void TpeConfig::validate() const {
  if (n_trials < 1) throw ValidationError("n_trials must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ValidationError("gamma must lie in (0, 1)");
  if (n_startup < 0 || n_startup >= n_trials) throw ValidationError("n_startup must satisfy 0 <= n_startup < n_trials");
  if (n_candidates < 1) throw ValidationError("n_candidates must be >= 1");
  if (!(prior_weight >= 0.0) || !std::isfinite(prior_weight)) throw ValidationError("prior_weight must be >= 0");
}

std::size_t tpe_good_count(std::size_t n, double gamma) {
  if (n == 0) return 0;
  const auto g = static_cast<std::size_t>(std::ceil(gamma * static_cast<double>(n) - 1e-12));
  return std::clamp<std::size_t>(g, 1, n);
}

namespace {

constexpr double kLogSqrt2Pi = 0.91893853320467274178;

std::size_t category_of(const SearchSpace& space, const MaxFeatures& mf) {
  for (std::size_t i = 0; i < space.max_features.size(); ++i) {
    if (space.max_features[i] == mf) return i;
  }
  return space.max_features.size();
}

HyperParams uniform_draw(const SearchSpace& space, Rng& rng, const HyperParams& base) {
  HyperParams p = base;
  p.max_features = space.max_features[rng.index(space.max_features.size())];
  p.min_samples_leaf = static_cast<int>(rng.uniform_int(space.min_samples_leaf_lo, space.min_samples_leaf_hi));
  p.max_depth = static_cast<int>(rng.uniform_int(space.max_depth_lo, space.max_depth_hi));
  return p;
}

struct CategoricalDensity {
  std::vector<double> prob;

  CategoricalDensity(std::size_t n_categories, const std::vector<std::size_t>& observed) : prob(n_categories, 1.0) {
    for (auto c : observed) {
      if (c < n_categories) prob[c] += 1.0;
    }
    const double total = std::accumulate(prob.begin(), prob.end(), 0.0);
    for (auto& p : prob) p /= total;
  }

  std::size_t sample(Rng& rng) const {
    double u = rng.uniform();
    for (std::size_t i = 0; i + 1 < prob.size(); ++i) {
      if (u < prob[i]) return i;
      u -= prob[i];
    }
    return prob.size() - 1;
  }

  double log_pdf(std::size_t c) const { return std::log(prob[c]); }
};

// Parzen mixture over log-values of an integer parameter on the range
// widened by half a step at each end. Each observation's bandwidth is the
// larger gap to its neighbours (range ends included), clipped to
// [range / min(100, n + 2), range]; an optional prior component sits at the
// centre with the whole range as its width. No observations and no prior
// gives the uniform density.
struct IntegerDensity {
  int lo, hi;
  double a, b;  // log bounds
  std::vector<double> mu;
  std::vector<double> sigma;
  std::vector<double> weight;

  IntegerDensity(int lo_, int hi_, const std::vector<int>& observed, double prior_weight)
      : lo(lo_), hi(hi_), a(std::log(lo_ - 0.5)), b(std::log(hi_ + 0.5)) {
    const double range = b - a;
    std::vector<double> sorted;
    for (int v : observed) sorted.push_back(std::log(static_cast<double>(v)));
    std::sort(sorted.begin(), sorted.end());
    const double min_bw = range / std::min(100.0, static_cast<double>(observed.size()) + 2.0);
    for (int v : observed) {
      const double l = std::log(static_cast<double>(v));
      const auto i = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), l) - sorted.begin());
      const double left = i == 0 ? l - a : l - sorted[i - 1];
      const double right = i + 1 >= sorted.size() ? b - l : sorted[i + 1] - l;
      mu.push_back(l);
      sigma.push_back(std::clamp(std::max(left, right), min_bw, range));
      weight.push_back(1.0);
    }
    if (prior_weight > 0.0) {
      mu.push_back(0.5 * (a + b));
      sigma.push_back(range);
      weight.push_back(prior_weight);
    }
    const double total = std::accumulate(weight.begin(), weight.end(), 0.0);
    for (auto& w : weight) w /= total;
  }

  int sample(Rng& rng) const {
    if (mu.empty()) return static_cast<int>(rng.uniform_int(lo, hi));
    double u = rng.uniform();
    std::size_t k = 0;
    for (; k + 1 < weight.size(); ++k) {
      if (u < weight[k]) break;
      u -= weight[k];
    }
    double l = rng.normal(mu[k], sigma[k]);
    for (int tries = 0; (l < a || l > b) && tries < 1000; ++tries) l = rng.normal(mu[k], sigma[k]);
    return static_cast<int>(std::clamp(std::round(std::exp(l)), static_cast<double>(lo), static_cast<double>(hi)));
  }

  double log_pdf(int v) const {
    if (mu.empty()) return -std::log(static_cast<double>(hi - lo + 1));
    const double l = std::log(static_cast<double>(v));
    std::vector<double> terms(mu.size());
    for (std::size_t i = 0; i < mu.size(); ++i) {
      const double z = (l - mu[i]) / sigma[i];
      terms[i] = std::log(weight[i]) - 0.5 * z * z - std::log(sigma[i]) - kLogSqrt2Pi;
    }
    const double m = *std::max_element(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += std::exp(t - m);
    return m + std::log(s);
  }
};

struct JointDensity {
  CategoricalDensity features;
  IntegerDensity leaf;
  IntegerDensity depth;

  JointDensity(const SearchSpace& space, std::span<const TpeTrial* const> set, double prior_weight)
      : features(space.max_features.size(), categories(space, set)),
        leaf(space.min_samples_leaf_lo, space.min_samples_leaf_hi, field(set, &HyperParams::min_samples_leaf),
             prior_weight),
        depth(space.max_depth_lo, space.max_depth_hi, field(set, &HyperParams::max_depth), prior_weight) {}

  static std::vector<std::size_t> categories(const SearchSpace& space, std::span<const TpeTrial* const> set) {
    std::vector<std::size_t> out;
    for (const auto* t : set) out.push_back(category_of(space, t->params.max_features));
    return out;
  }

  static std::vector<int> field(std::span<const TpeTrial* const> set, int HyperParams::*member) {
    std::vector<int> out;
    for (const auto* t : set) out.push_back(t->params.*member);
    return out;
  }
};

}  // namespace

HyperParams tpe_suggest(std::span<const TpeTrial> history, const SearchSpace& space, const TpeConfig& config,
                        Rng& rng, const HyperParams& base) {
  space.validate();
  config.validate();
  if (history.size() < static_cast<std::size_t>(config.n_startup) || history.empty()) {
    return uniform_draw(space, rng, base);
  }

  std::vector<const TpeTrial*> sorted;
  for (const auto& t : history) sorted.push_back(&t);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const TpeTrial* a, const TpeTrial* b) { return a->score > b->score; });
  const std::size_t n_good = tpe_good_count(sorted.size(), config.gamma);
  const std::span<const TpeTrial* const> all(sorted);
  const JointDensity good(space, all.first(n_good), config.prior_weight);
  const JointDensity bad(space, all.subspan(n_good), config.prior_weight);

  HyperParams best = base;
  double best_ratio = -std::numeric_limits<double>::infinity();
  for (int c = 0; c < config.n_candidates; ++c) {
    HyperParams cand = base;
    const std::size_t cat = good.features.sample(rng);
    cand.max_features = space.max_features[cat];
    cand.min_samples_leaf = good.leaf.sample(rng);
    cand.max_depth = good.depth.sample(rng);
    const double ratio = (good.features.log_pdf(cat) - bad.features.log_pdf(cat)) +
                         (good.leaf.log_pdf(cand.min_samples_leaf) - bad.leaf.log_pdf(cand.min_samples_leaf)) +
                         (good.depth.log_pdf(cand.max_depth) - bad.depth.log_pdf(cand.max_depth));
    if (ratio > best_ratio) {
      best_ratio = ratio;
      best = cand;
    }
  }
  return best;
}

std::vector<TpeTrial> tpe_optimize(const Objective& objective, const SearchSpace& space, const TpeConfig& config,
                                   const HyperParams& base) {
  config.validate();
  space.validate();
  Rng rng(config.seed);
  std::vector<TpeTrial> history;
  history.reserve(static_cast<std::size_t>(config.n_trials));
  for (int i = 0; i < config.n_trials; ++i) {
    HyperParams p = tpe_suggest(history, space, config, rng, base);
    double score = objective(p);
    if (std::isnan(score)) score = -std::numeric_limits<double>::infinity();
    history.push_back({p, score});
  }
  return history;
}

std::vector<TpeTrial> random_search(const Objective& objective, const SearchSpace& space, int n_trials,
                                    std::uint64_t seed, const HyperParams& base) {
  space.validate();
  if (n_trials < 1) throw ValidationError("n_trials must be >= 1");
  Rng rng(seed);
  std::vector<TpeTrial> history;
  for (int i = 0; i < n_trials; ++i) {
    HyperParams p = uniform_draw(space, rng, base);
    double score = objective(p);
    if (std::isnan(score)) score = -std::numeric_limits<double>::infinity();
    history.push_back({p, score});
  }
  return history;
}

TuneResult tune(const FeatureMatrix& x, std::span<const double> y, const SearchSpace& space, const TpeConfig& config,
                const HyperParams& base, std::uint64_t forest_seed) {
  const Objective objective = [&](const HyperParams& p) { return fit_forest(x, y, p, forest_seed).oob_r2; };
  TuneResult result;
  result.history = tpe_optimize(objective, space, config, base);
  std::size_t best = 0;
  for (std::size_t i = 1; i < result.history.size(); ++i) {
    if (result.history[i].score > result.history[best].score) best = i;
  }
  result.best = result.history[best].params;
  result.best_score = result.history[best].score;
  return result;
}

}  // namespace vigil
