#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vigil/forest.hpp"
#include "vigil/rng.hpp"

namespace vigil {

struct SearchSpace {
  std::vector<MaxFeatures> max_features{MaxFeatures::sqrt(), MaxFeatures::log2(), MaxFeatures::of(0.3),
                                        MaxFeatures::of(0.5), MaxFeatures::of(0.8)};
  int min_samples_leaf_lo = 1;
  int min_samples_leaf_hi = 16;
  int max_depth_lo = 8;
  int max_depth_hi = 64;

  void validate() const;
};

struct TpeConfig {
  int n_trials = 50;
  double gamma = 0.25;
  int n_startup = 10;
  int n_candidates = 24;
  // Weight of the wide prior component in each integer density, relative to
  // one observation. 0 gives a pure Parzen mixture over observed values.
  double prior_weight = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TpeTrial {
  HyperParams params;
  double score = 0.0;
};

/// Next configuration to evaluate. Below n_startup trials the draw is
/// uniform; after that, candidates sampled from the good-trial density are
/// ranked by density_good / density_bad. Fields outside the search space
/// (n_estimators, bootstrap) are copied from `base`.
HyperParams tpe_suggest(std::span<const TpeTrial> history, const SearchSpace& space, const TpeConfig& config,
                        Rng& rng, const HyperParams& base = {});

/// Size of the good set for a history of n trials: ceil(gamma * n).
std::size_t tpe_good_count(std::size_t n, double gamma);

using Objective = std::function<double(const HyperParams&)>;

/// Sequential maximization of `objective` for config.n_trials trials.
std::vector<TpeTrial> tpe_optimize(const Objective& objective, const SearchSpace& space, const TpeConfig& config,
                                   const HyperParams& base = {});

/// Uniform random search baseline.
std::vector<TpeTrial> random_search(const Objective& objective, const SearchSpace& space, int n_trials,
                                    std::uint64_t seed, const HyperParams& base = {});

struct TuneResult {
  HyperParams best;
  double best_score = 0.0;
  std::vector<TpeTrial> history;
};

/// TPE over the search space maximizing the forest's OOB R^2.
TuneResult tune(const FeatureMatrix& x, std::span<const double> y, const SearchSpace& space, const TpeConfig& config,
                const HyperParams& base, std::uint64_t forest_seed);

}  // namespace vigil
