#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vigil/forest.hpp"
#include "vigil/matrix.hpp"
#include "vigil/montage.hpp"

namespace vigil {

struct TreeShapValues {
  std::vector<double> phi;  // one entry per feature
  double base = 0.0;
};

/// Cover-weighted mean of the leaf values: the prediction with no feature known.
double tree_base_value(const RegressionTree& tree);

/// Exact path-dependent Shapley values of one tree at x. base + sum(phi)
/// equals tree.predict(x).
TreeShapValues tree_shap(const RegressionTree& tree, std::span<const double> x);

struct ShapMatrix {
  double base_value = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_features = 0;
  std::vector<double> phi;  // row-major n_samples x n_features

  std::span<const double> row(std::size_t i) const { return {phi.data() + i * n_features, n_features}; }
  double operator()(std::size_t i, std::size_t j) const { return phi[i * n_features + j]; }
};

/// Tree-averaged SHAP values for every row of x.
ShapMatrix forest_shap(const Forest& forest, const FeatureMatrix& x);

struct FeatureReport {
  std::size_t feature = 0;
  std::string label;
  double mean_abs_shap = 0.0;
  /// Pearson r between the feature's values and its SHAP values; empty
  /// when either has zero variance.
  std::optional<double> direction_r;
};

/// One report per feature, in feature order. `labels` may be empty.
std::vector<FeatureReport> feature_summary(const ShapMatrix& shap, const FeatureMatrix& x,
                                           const std::vector<std::string>& labels = {});

/// The k features with the largest mean |SHAP|; ties go to the lower index.
std::vector<FeatureReport> top_k(const ShapMatrix& shap, const FeatureMatrix& x,
                                 const std::vector<std::string>& labels = {}, std::size_t k = 5);

struct RegionalObservation {
  std::size_t feature = 0;
  RegionPair region_pair{Region::F, Region::F};
  std::string chan_a;
  std::string chan_b;
  double response = 0.0;
};

/// One observation per channel-pair feature, response = mean |SHAP|.
/// Features follow canonical pair order over `channel_labels`.
std::vector<RegionalObservation> regional_table(const ShapMatrix& shap, const std::vector<std::string>& channel_labels,
                                                const Montage& montage);

}  // namespace vigil
