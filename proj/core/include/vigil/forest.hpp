#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vigil/matrix.hpp"
#include "vigil/rng.hpp"

namespace vigil {

/// Candidate features per split: sqrt(d), log2(d), or a fraction of d.
struct MaxFeatures {
  enum class Kind { sqrt, log2, fraction };
  Kind kind = Kind::fraction;
  double fraction = 1.0;

  static MaxFeatures sqrt() { return {Kind::sqrt, 0.0}; }
  static MaxFeatures log2() { return {Kind::log2, 0.0}; }
  static MaxFeatures of(double f) { return {Kind::fraction, f}; }
  /// "sqrt", "log2", or a number in (0, 1].
  static MaxFeatures parse(std::string_view text);

  std::string to_string() const;
  /// Resolved count, at least 1 and at most n_features.
  std::size_t resolve(std::size_t n_features) const;
  friend bool operator==(const MaxFeatures&, const MaxFeatures&) = default;
};

inline constexpr int kUnlimitedDepth = std::numeric_limits<int>::max();

struct HyperParams {
  int n_estimators = 200;
  MaxFeatures max_features = MaxFeatures::of(0.3);
  int min_samples_leaf = 1;
  int max_depth = kUnlimitedDepth;
  /// Draw a bootstrap sample per tree. Disabling it is a test hook.
  bool bootstrap = true;

  void validate() const;
  /// max_features 0.3, min_samples_leaf 4, max_depth 48, 200 trees.
  static HyperParams paper_tuned();
};

/// Flattened node. Leaves have feature == -1. Samples with
/// x[feature] <= threshold go left. Cover counts bootstrap draws.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;
  std::int64_t cover = 0;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class RegressionTree {
 public:
  RegressionTree() = default;
  explicit RegressionTree(std::vector<TreeNode> nodes);

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(std::size_t i) const { return nodes_[i]; }
  std::size_t size() const { return nodes_.size(); }
  int depth() const;

  double predict(std::span<const double> x) const;
  /// Index of the leaf reached by x.
  std::size_t leaf_of(std::span<const double> x) const;

  friend bool operator==(const RegressionTree&, const RegressionTree&) = default;

 private:
  std::vector<TreeNode> nodes_;
};

struct Forest {
  HyperParams params;
  std::uint64_t seed = 0;
  std::size_t n_features = 0;
  std::size_t n_train = 0;
  std::vector<RegressionTree> trees;
  /// Bootstrap multiplicity of each training row, per tree.
  std::vector<std::vector<std::uint32_t>> inbag;
  /// Out-of-bag R^2; NaN when no sample was ever out of bag.
  double oob_r2 = std::numeric_limits<double>::quiet_NaN();
};

/// Greedy variance-reduction CART on the given rows (duplicates allowed).
/// Candidate features per node are drawn from `rng` without replacement.
RegressionTree fit_tree(const FeatureMatrix& x, std::span<const double> y, std::span<const std::size_t> rows,
                        const HyperParams& params, Rng& rng);

/// Bagged ensemble; tree t draws its bootstrap and candidate features from
/// a generator seeded by derive_seed(seed, t).
Forest fit_forest(const FeatureMatrix& x, std::span<const double> y, const HyperParams& params, std::uint64_t seed);

double predict(const Forest& forest, std::span<const double> x);
std::vector<double> predict(const Forest& forest, const FeatureMatrix& x);

/// R^2 of out-of-bag predictions over samples that were out of bag at
/// least once.
double oob_score(const Forest& forest, const FeatureMatrix& x, std::span<const double> y);

/// Bootstrap multiplicities tree `tree` draws for n rows.
std::vector<std::uint32_t> bootstrap_counts(std::uint64_t seed, std::size_t tree, std::size_t n);

std::string forest_to_json(const Forest& forest);
Forest forest_from_json(std::string_view text);
void save_forest(const Forest& forest, const std::filesystem::path& path);
Forest load_forest(const std::filesystem::path& path);

std::string params_to_json(const HyperParams& params);
HyperParams params_from_json(std::string_view text);

}  // namespace vigil
