#include "vigil/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vigil/connectivity.hpp"
#include "vigil/error.hpp"
#include "vigil/parallel.hpp"
#include "vigil/stats.hpp"

namespace vigil {

namespace {

void check_covers(const RegressionTree& tree) {
  for (const auto& nd : tree.nodes()) {
    if (nd.cover <= 0) throw ValidationError("tree node has no cover; SHAP needs training covers");
  }
}

struct PathElement {
  int feature = -1;
  double zero_fraction = 0.0;
  double one_fraction = 0.0;
  double weight = 0.0;
};

void extend_path(PathElement* path, int depth, double zero_fraction, double one_fraction, int feature) {
  path[depth] = {feature, zero_fraction, one_fraction, depth == 0 ? 1.0 : 0.0};
  for (int i = depth - 1; i >= 0; --i) {
    path[i + 1].weight += one_fraction * path[i].weight * (i + 1) / static_cast<double>(depth + 1);
    path[i].weight = zero_fraction * path[i].weight * (depth - i) / static_cast<double>(depth + 1);
  }
}

void unwind_path(PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next_one = path[depth].weight;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = path[i].weight;
      path[i].weight = next_one * (depth + 1) / ((i + 1) * one);
      next_one = tmp - path[i].weight * zero * (depth - i) / static_cast<double>(depth + 1);
    } else {
      path[i].weight = path[i].weight * (depth + 1) / (zero * (depth - i));
    }
  }
  for (int i = index; i < depth; ++i) {
    path[i].feature = path[i + 1].feature;
    path[i].zero_fraction = path[i + 1].zero_fraction;
    path[i].one_fraction = path[i + 1].one_fraction;
  }
}

double unwound_path_sum(const PathElement* path, int depth, int index) {
  const double one = path[index].one_fraction;
  const double zero = path[index].zero_fraction;
  double next_one = path[depth].weight;
  double total = 0.0;
  for (int i = depth - 1; i >= 0; --i) {
    if (one != 0.0) {
      const double tmp = next_one * (depth + 1) / ((i + 1) * one);
      total += tmp;
      next_one = path[i].weight - tmp * zero * ((depth - i) / static_cast<double>(depth + 1));
    } else if (zero != 0.0) {
      total += (path[i].weight / zero) / ((depth - i) / static_cast<double>(depth + 1));
    }
  }
  return total;
}

class ShapWalker {
 public:
  ShapWalker(const RegressionTree& tree, std::span<const double> x, std::vector<double>& phi)
      : tree_(tree), x_(x), phi_(phi) {
    const auto d = static_cast<std::size_t>(tree.depth()) + 2;
    storage_.resize((d + 1) * (d + 2) / 2 + d);
  }

  void run() { recurse(0, 0, storage_.data(), 1.0, 1.0, -1); }

 private:
  void recurse(std::size_t node_index, int depth, PathElement* parent_path, double zero_fraction,
               double one_fraction, int feature) {
    PathElement* path = parent_path + depth + 1;
    std::copy(parent_path, parent_path + depth + 1, path);
    extend_path(path, depth, zero_fraction, one_fraction, feature);

    const auto& nd = tree_.node(node_index);
    if (nd.is_leaf()) {
      for (int i = 1; i <= depth; ++i) {
        const double w = unwound_path_sum(path, depth, i);
        const auto& el = path[i];
        phi_[static_cast<std::size_t>(el.feature)] += w * (el.one_fraction - el.zero_fraction) * nd.value;
      }
      return;
    }

    const bool goes_left = x_[static_cast<std::size_t>(nd.feature)] <= nd.threshold;
    const auto hot = static_cast<std::size_t>(goes_left ? nd.left : nd.right);
    const auto cold = static_cast<std::size_t>(goes_left ? nd.right : nd.left);
    const auto cover = static_cast<double>(nd.cover);
    const double hot_zero = static_cast<double>(tree_.node(hot).cover) / cover;
    const double cold_zero = static_cast<double>(tree_.node(cold).cover) / cover;
    double incoming_zero = 1.0;
    double incoming_one = 1.0;

    int index = 0;
    for (; index <= depth; ++index) {
      if (path[index].feature == nd.feature) break;
    }
    if (index != depth + 1) {
      incoming_zero = path[index].zero_fraction;
      incoming_one = path[index].one_fraction;
      unwind_path(path, depth, index);
      depth -= 1;
    }
    recurse(hot, depth + 1, path, hot_zero * incoming_zero, incoming_one, nd.feature);
    recurse(cold, depth + 1, path, cold_zero * incoming_zero, 0.0, nd.feature);
  }

  const RegressionTree& tree_;
  std::span<const double> x_;
  std::vector<double>& phi_;
  std::vector<PathElement> storage_;
};

}  // namespace

double tree_base_value(const RegressionTree& tree) {
  check_covers(tree);
  double sum = 0.0;
  std::int64_t cover = 0;
  for (const auto& nd : tree.nodes()) {
    if (!nd.is_leaf()) continue;
    sum += static_cast<double>(nd.cover) * nd.value;
    cover += nd.cover;
  }
  return sum / static_cast<double>(cover);
}

TreeShapValues tree_shap(const RegressionTree& tree, std::span<const double> x) {
  TreeShapValues out;
  out.base = tree_base_value(tree);
  out.phi.assign(x.size(), 0.0);
  for (const auto& nd : tree.nodes()) {
    if (!nd.is_leaf() && static_cast<std::size_t>(nd.feature) >= x.size()) {
      throw ValidationError("sample has fewer features than the tree uses");
    }
  }
  if (tree.size() > 1) ShapWalker(tree, x, out.phi).run();
  return out;
}

ShapMatrix forest_shap(const Forest& forest, const FeatureMatrix& x) {
  if (x.cols() != forest.n_features) throw ValidationError("feature matrix width does not match the forest");
  if (forest.trees.empty()) throw ValidationError("forest has no trees");
  const double n_trees = static_cast<double>(forest.trees.size());
  ShapMatrix out;
  out.n_samples = x.rows();
  out.n_features = x.cols();
  out.phi.assign(out.n_samples * out.n_features, 0.0);
  double base = 0.0;
  for (const auto& tree : forest.trees) base += tree_base_value(tree);
  out.base_value = base / n_trees;
  parallel_for(x.rows(), [&](std::size_t i) {
    const auto xi = x.row(i);
    std::vector<double> acc(x.cols(), 0.0);
    std::vector<double> phi(x.cols());
    for (const auto& tree : forest.trees) {
      std::fill(phi.begin(), phi.end(), 0.0);
      if (tree.size() > 1) ShapWalker(tree, xi, phi).run();
      for (std::size_t j = 0; j < phi.size(); ++j) acc[j] += phi[j];
    }
    double* dst = out.phi.data() + i * out.n_features;
    for (std::size_t j = 0; j < acc.size(); ++j) dst[j] = acc[j] / n_trees;
  });
  return out;
}

std::vector<FeatureReport> feature_summary(const ShapMatrix& shap, const FeatureMatrix& x,
                                           const std::vector<std::string>& labels) {
  if (x.rows() != shap.n_samples || x.cols() != shap.n_features) {
    throw ValidationError("SHAP matrix and feature matrix differ in shape");
  }
  if (!labels.empty() && labels.size() != shap.n_features) throw ValidationError("label count does not match features");
  if (shap.n_samples < 2) throw ValidationError("feature summary needs at least two samples");
  std::vector<FeatureReport> out(shap.n_features);
  std::vector<double> phi_col(shap.n_samples);
  for (std::size_t j = 0; j < shap.n_features; ++j) {
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < shap.n_samples; ++i) {
      phi_col[i] = shap(i, j);
      abs_sum += std::abs(phi_col[i]);
    }
    auto& r = out[j];
    r.feature = j;
    r.label = labels.empty() ? "f" + std::to_string(j) : labels[j];
    r.mean_abs_shap = abs_sum / static_cast<double>(shap.n_samples);
    const auto values = x.column(j);
    r.direction_r = stats::pearson_r(values, phi_col);
  }
  return out;
}

std::vector<FeatureReport> top_k(const ShapMatrix& shap, const FeatureMatrix& x, const std::vector<std::string>& labels,
                                 std::size_t k) {
  auto all = feature_summary(shap, x, labels);
  std::stable_sort(all.begin(), all.end(),
                   [](const FeatureReport& a, const FeatureReport& b) { return a.mean_abs_shap > b.mean_abs_shap; });
  all.resize(std::min(k, all.size()));
  return all;
}

std::vector<RegionalObservation> regional_table(const ShapMatrix& shap, const std::vector<std::string>& channel_labels,
                                                const Montage& montage) {
  const std::size_t n = channel_labels.size();
  if (pair_count(n) != shap.n_features) {
    throw ValidationError("SHAP width " + std::to_string(shap.n_features) + " does not match " + std::to_string(n) +
                          " channels");
  }
  montage.validate_for(channel_labels);
  std::vector<RegionalObservation> out(shap.n_features);
  for (std::size_t k = 0; k < shap.n_features; ++k) {
    const auto [a, b] = unpair(k, n);
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < shap.n_samples; ++i) abs_sum += std::abs(shap(i, k));
    auto& obs = out[k];
    obs.feature = k;
    obs.chan_a = channel_labels[a];
    obs.chan_b = channel_labels[b];
    obs.region_pair = RegionPair::of(montage.region_of(obs.chan_a), montage.region_of(obs.chan_b));
    obs.response = shap.n_samples == 0 ? 0.0 : abs_sum / static_cast<double>(shap.n_samples);
  }
  return out;
}

}  // namespace vigil
