#include "vigil/forest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "vigil/error.hpp"
#include "vigil/parallel.hpp"

namespace vigil {

using nlohmann::json;

MaxFeatures MaxFeatures::parse(std::string_view text) {
  if (text == "sqrt") return sqrt();
  if (text == "log2") return log2();
  double f = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), f);
  if (ec != std::errc() || ptr != text.data() + text.size() || !(f > 0.0 && f <= 1.0)) {
    throw ValidationError("max_features must be 'sqrt', 'log2', or a fraction in (0, 1]: '" + std::string(text) + "'");
  }
  return of(f);
}

std::string MaxFeatures::to_string() const {
  switch (kind) {
    case Kind::sqrt: return "sqrt";
    case Kind::log2: return "log2";
    case Kind::fraction: {
      char buf[32];
      auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), fraction);
      return std::string(buf, ptr);
    }
  }
  return "?";
}

std::size_t MaxFeatures::resolve(std::size_t d) const {
  if (d == 0) throw ValidationError("no features to choose from");
  double count = 0.0;
  switch (kind) {
    case Kind::sqrt: count = std::floor(std::sqrt(static_cast<double>(d))); break;
    case Kind::log2: count = std::floor(std::log2(static_cast<double>(d))); break;
    case Kind::fraction: count = std::floor(fraction * static_cast<double>(d)); break;
  }
  return std::clamp<std::size_t>(static_cast<std::size_t>(count), 1, d);
}

void HyperParams::validate() const {
  if (n_estimators < 1) throw ValidationError("n_estimators must be >= 1");
  if (min_samples_leaf < 1) throw ValidationError("min_samples_leaf must be >= 1");
  if (max_depth < 1) throw ValidationError("max_depth must be >= 1");
  if (max_features.kind == MaxFeatures::Kind::fraction &&
      !(max_features.fraction > 0.0 && max_features.fraction <= 1.0)) {
    throw ValidationError("max_features fraction must lie in (0, 1]");
  }
}

HyperParams HyperParams::paper_tuned() {
  HyperParams p;
  p.n_estimators = 200;
  p.max_features = MaxFeatures::of(0.3);
  p.min_samples_leaf = 4;
  p.max_depth = 48;
  return p;
}

RegressionTree::RegressionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw ValidationError("tree has no nodes");
  const auto n = static_cast<int>(nodes_.size());
  for (const auto& node : nodes_) {
    if (node.is_leaf()) continue;
    if (node.left <= 0 || node.right <= 0 || node.left >= n || node.right >= n) {
      throw ValidationError("tree node has an invalid child index");
    }
  }
}

int RegressionTree::depth() const {
  std::vector<std::pair<std::size_t, int>> stack{{0, 0}};
  int deepest = 0;
  while (!stack.empty()) {
    auto [i, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const auto& nd = nodes_[i];
    if (!nd.is_leaf()) {
      stack.emplace_back(static_cast<std::size_t>(nd.left), d + 1);
      stack.emplace_back(static_cast<std::size_t>(nd.right), d + 1);
    }
  }
  return deepest;
}

std::size_t RegressionTree::leaf_of(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes_[i].is_leaf()) {
    const auto& nd = nodes_[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right);
  }
  return i;
}

double RegressionTree::predict(std::span<const double> x) const { return nodes_[leaf_of(x)].value; }

namespace {

// Column-major copy of the training matrix plus, per feature, the row ids in
// stable ascending order of value. Shared by all trees of a forest.
struct TrainingView {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> cols;
  std::vector<std::uint32_t> order;

  explicit TrainingView(const FeatureMatrix& x) : n(x.rows()), d(x.cols()), cols(n * d), order(n * d) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = x.row(i);
      for (std::size_t j = 0; j < d; ++j) {
        if (!std::isfinite(r[j])) throw ValidationError("feature matrix contains a non-finite value");
        cols[j * n + i] = r[j];
      }
    }
    parallel_for(d, [&](std::size_t j) {
      auto* o = order.data() + j * n;
      std::iota(o, o + n, 0u);
      const double* c = cols.data() + j * n;
      std::stable_sort(o, o + n, [c](std::uint32_t a, std::uint32_t b) { return c[a] < c[b]; });
    });
  }

  double value(std::size_t feature, std::uint32_t row) const { return cols[feature * n + row]; }
};

struct Split {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  double gain = -std::numeric_limits<double>::infinity();
  std::size_t n_left = 0;  // distinct rows going left
};

// Grows one tree over rows with positive weight. Each feature keeps its own
// value-sorted list of the node's rows; a node owns the same [lo, hi) range
// in every list, and splitting stable-partitions all lists.
class TreeBuilder {
 public:
  TreeBuilder(const TrainingView& view, std::span<const double> y, std::span<const std::uint32_t> weights,
              const HyperParams& params, Rng& rng)
      : view_(view), y_(y), w_(weights), params_(params), rng_(rng) {
    for (std::size_t r = 0; r < view_.n; ++r) {
      if (w_[r] > 0) ++m_;
    }
    if (m_ == 0) throw ValidationError("cannot fit a tree on an empty row set");
    lists_.resize(view_.d * m_);
    for (std::size_t f = 0; f < view_.d; ++f) {
      const auto* o = view_.order.data() + f * view_.n;
      auto* dst = lists_.data() + f * m_;
      for (std::size_t k = 0; k < view_.n; ++k) {
        if (w_[o[k]] > 0) *dst++ = o[k];
      }
    }
    goes_left_.assign(view_.n, 0);
    scratch_.resize(m_);
    features_.resize(view_.d);
    std::iota(features_.begin(), features_.end(), std::size_t{0});
    n_candidates_ = params_.max_features.resolve(view_.d);
  }

  RegressionTree build() {
    std::int64_t w = 0;
    double s = 0.0;
    for (std::size_t k = 0; k < m_; ++k) {
      const auto r = lists_[k];
      w += w_[r];
      s += static_cast<double>(w_[r]) * y_[r];
    }
    grow(0, m_, 0, w, s);
    return RegressionTree(std::move(nodes_));
  }

 private:
  std::uint32_t* list(std::size_t f) { return lists_.data() + f * m_; }

  bool is_leaf_size(int depth, std::int64_t w) const {
    return depth >= params_.max_depth || w < 2 * static_cast<std::int64_t>(params_.min_samples_leaf);
  }

  bool constant_target(std::size_t lo, std::size_t hi) {
    const auto* l = list(0);
    const double first = y_[l[lo]];
    for (std::size_t k = lo + 1; k < hi; ++k) {
      if (y_[l[k]] != first) return false;
    }
    return true;
  }

  int push_leaf(std::int64_t w, double s) {
    TreeNode nd;
    nd.cover = w;
    nd.value = s / static_cast<double>(w);
    nodes_.push_back(nd);
    return static_cast<int>(nodes_.size() - 1);
  }

  Split find_split(std::size_t lo, std::size_t hi, std::int64_t w, double s) {
    // Partial Fisher-Yates over the persistent feature permutation.
    const std::size_t d = view_.d;
    for (std::size_t i = 0; i < n_candidates_; ++i) {
      const std::size_t j = i + rng_.index(d - i);
      std::swap(features_[i], features_[j]);
    }
    const double mean = s / static_cast<double>(w);
    double centered_total = 0.0;
    {
      const auto* l = list(0);
      for (std::size_t k = lo; k < hi; ++k) centered_total += static_cast<double>(w_[l[k]]) * (y_[l[k]] - mean);
    }
    const auto min_leaf = static_cast<std::int64_t>(params_.min_samples_leaf);
    Split best;
    for (std::size_t c = 0; c < n_candidates_; ++c) {
      const std::size_t f = features_[c];
      const auto* l = list(f);
      const double* col = view_.cols.data() + f * view_.n;
      std::int64_t wl = 0;
      double sl = 0.0;
      double vn = col[l[lo]];
      for (std::size_t k = lo; k + 1 < hi; ++k) {
        const auto r = l[k];
        const std::uint32_t wk = w_[r];
        wl += wk;
        sl += static_cast<double>(wk) * (y_[r] - mean);
        const std::int64_t wr = w - wl;
        if (wr < min_leaf) break;
        const double v = vn;
        vn = col[l[k + 1]];
        if (!(v < vn) || wl < min_leaf) continue;
        const double sr = centered_total - sl;
        const double wlf = static_cast<double>(wl);
        const double wrf = static_cast<double>(wr);
        // Division-free screen; loose enough never to reject a position the exact gain would accept.
        if (sl * sl * wrf + sr * sr * wlf < best.gain * (wlf * wrf) * (1.0 - 1e-9)) continue;
        const double gain = sl * sl / wlf + sr * sr / wrf;
        double thr = v + (vn - v) / 2.0;
        if (!(thr < vn)) thr = v;
        const bool better = gain > best.gain ||
                            (gain == best.gain && (f < best.feature || (f == best.feature && thr < best.threshold)));
        if (better) {
          best.found = true;
          best.feature = f;
          best.threshold = thr;
          best.gain = gain;
          best.n_left = k + 1 - lo;
        }
      }
    }
    return best;
  }

  void partition(std::size_t lo, std::size_t hi, const Split& split) {
    const auto* chosen = list(split.feature);
    for (std::size_t k = lo; k < hi; ++k) goes_left_[chosen[k]] = (k - lo) < split.n_left ? 1 : 0;
    for (std::size_t f = 0; f < view_.d; ++f) {
      auto* l = list(f);
      std::size_t left = lo;
      std::size_t right = 0;
      for (std::size_t k = lo; k < hi; ++k) {
        const auto r = l[k];
        const std::size_t g = goes_left_[r];
        l[left] = r;
        scratch_[right] = r;
        left += g;
        right += 1 - g;
      }
      std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(right), l + left);
    }
  }

  int grow(std::size_t lo, std::size_t hi, int depth, std::int64_t w, double s) {
    if (is_leaf_size(depth, w) || constant_target(lo, hi)) return push_leaf(w, s);
    const Split split = find_split(lo, hi, w, s);
    if (!split.found) return push_leaf(w, s);

    const int idx = push_leaf(w, s);
    nodes_[static_cast<std::size_t>(idx)].feature = static_cast<int>(split.feature);
    nodes_[static_cast<std::size_t>(idx)].threshold = split.threshold;

    // Child sums are accumulated directly so single-row leaves hold their
    // target exactly.
    const std::size_t mid = lo + split.n_left;
    const auto* chosen = list(split.feature);
    std::int64_t wl = 0, wr = 0;
    double sl = 0.0, sr = 0.0;
    for (std::size_t k = lo; k < mid; ++k) {
      wl += w_[chosen[k]];
      sl += static_cast<double>(w_[chosen[k]]) * y_[chosen[k]];
    }
    for (std::size_t k = mid; k < hi; ++k) {
      wr += w_[chosen[k]];
      sr += static_cast<double>(w_[chosen[k]]) * y_[chosen[k]];
    }
    int left, right;
    if (is_leaf_size(depth + 1, wl) && is_leaf_size(depth + 1, wr)) {
      left = push_leaf(wl, sl);
      right = push_leaf(wr, sr);
    } else {
      partition(lo, hi, split);
      left = grow(lo, mid, depth + 1, wl, sl);
      right = grow(mid, hi, depth + 1, wr, sr);
    }
    nodes_[static_cast<std::size_t>(idx)].left = left;
    nodes_[static_cast<std::size_t>(idx)].right = right;
    return idx;
  }

  const TrainingView& view_;
  std::span<const double> y_;
  std::span<const std::uint32_t> w_;
  const HyperParams& params_;
  Rng& rng_;
  std::size_t m_ = 0;
  std::size_t n_candidates_ = 1;
  std::vector<std::uint32_t> lists_;
  std::vector<std::uint8_t> goes_left_;
  std::vector<std::uint32_t> scratch_;
  std::vector<std::size_t> features_;
  std::vector<TreeNode> nodes_;
};

void check_targets(const FeatureMatrix& x, std::span<const double> y) {
  if (x.rows() != y.size()) throw ValidationError("feature rows and targets differ in length");
  for (double v : y) {
    if (!std::isfinite(v)) throw ValidationError("targets contain a non-finite value");
  }
}

std::vector<std::uint32_t> draw_bootstrap(Rng& rng, std::size_t n) {
  std::vector<std::uint32_t> counts(n, 0);
  for (std::size_t i = 0; i < n; ++i) ++counts[rng.index(n)];
  return counts;
}

}  // namespace

RegressionTree fit_tree(const FeatureMatrix& x, std::span<const double> y, std::span<const std::size_t> rows,
                        const HyperParams& params, Rng& rng) {
  params.validate();
  check_targets(x, y);
  if (rows.empty()) throw ValidationError("cannot fit a tree on an empty row set");
  std::vector<std::uint32_t> weights(x.rows(), 0);
  for (auto r : rows) {
    if (r >= x.rows()) throw ValidationError("row index out of range");
    ++weights[r];
  }
  const TrainingView view(x);
  return TreeBuilder(view, y, weights, params, rng).build();
}

std::vector<std::uint32_t> bootstrap_counts(std::uint64_t seed, std::size_t tree, std::size_t n) {
  Rng rng(derive_seed(seed, tree));
  return draw_bootstrap(rng, n);
}

Forest fit_forest(const FeatureMatrix& x, std::span<const double> y, const HyperParams& params, std::uint64_t seed) {
  params.validate();
  check_targets(x, y);
  if (x.rows() < 2) throw ValidationError("a forest needs at least two training rows");
  const TrainingView view(x);
  Forest forest;
  forest.params = params;
  forest.seed = seed;
  forest.n_features = x.cols();
  forest.n_train = x.rows();
  const auto n_trees = static_cast<std::size_t>(params.n_estimators);
  forest.trees.resize(n_trees);
  forest.inbag.resize(n_trees);
  parallel_for(n_trees, [&](std::size_t t) {
    Rng rng(derive_seed(seed, t));
    auto counts = params.bootstrap ? draw_bootstrap(rng, x.rows()) : std::vector<std::uint32_t>(x.rows(), 1);
    forest.trees[t] = TreeBuilder(view, y, counts, params, rng).build();
    forest.inbag[t] = std::move(counts);
  });
  try {
    forest.oob_r2 = oob_score(forest, x, y);
  } catch (const ValidationError&) {
    forest.oob_r2 = std::numeric_limits<double>::quiet_NaN();
  }
  return forest;
}

double predict(const Forest& forest, std::span<const double> x) {
  if (x.size() != forest.n_features) throw ValidationError("feature vector length does not match the forest");
  if (forest.trees.empty()) throw ValidationError("forest has no trees");
  double sum = 0.0;
  for (const auto& tree : forest.trees) sum += tree.predict(x);
  return sum / static_cast<double>(forest.trees.size());
}

std::vector<double> predict(const Forest& forest, const FeatureMatrix& x) {
  std::vector<double> out(x.rows());
  parallel_for(x.rows(), [&](std::size_t i) { out[i] = predict(forest, x.row(i)); });
  return out;
}

double oob_score(const Forest& forest, const FeatureMatrix& x, std::span<const double> y) {
  if (x.rows() != forest.n_train || y.size() != forest.n_train) {
    throw ValidationError("OOB scoring needs the training data the forest was fitted on");
  }
  if (forest.inbag.size() != forest.trees.size()) throw ValidationError("forest carries no bootstrap membership");
  std::vector<double> sum(x.rows(), 0.0);
  std::vector<std::uint32_t> count(x.rows(), 0);
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    const auto& inbag = forest.inbag[t];
    for (std::size_t i = 0; i < x.rows(); ++i) {
      if (inbag[i] != 0) continue;
      sum[i] += forest.trees[t].predict(x.row(i));
      ++count[i];
    }
  }
  std::vector<std::size_t> included;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (count[i] > 0) included.push_back(i);
  }
  if (included.empty()) throw ValidationError("every sample is in bag for every tree; OOB score undefined");
  double mean = 0.0;
  for (auto i : included) mean += y[i];
  mean /= static_cast<double>(included.size());
  double sse = 0.0, sst = 0.0;
  for (auto i : included) {
    const double pred = sum[i] / count[i];
    sse += (pred - y[i]) * (pred - y[i]);
    sst += (y[i] - mean) * (y[i] - mean);
  }
  if (sst == 0.0) throw ValidationError("OOB targets have zero variance; R^2 undefined");
  return 1.0 - sse / sst;
}

namespace {

json params_json(const HyperParams& p) {
  json j;
  j["n_estimators"] = p.n_estimators;
  if (p.max_features.kind == MaxFeatures::Kind::fraction) {
    j["max_features"] = p.max_features.fraction;
  } else {
    j["max_features"] = p.max_features.to_string();
  }
  j["min_samples_leaf"] = p.min_samples_leaf;
  j["max_depth"] = p.max_depth == kUnlimitedDepth ? json(nullptr) : json(p.max_depth);
  j["bootstrap"] = p.bootstrap;
  return j;
}

HyperParams params_from(const json& j) {
  HyperParams p;
  try {
    if (j.contains("preset")) {
      const auto name = j.at("preset").get<std::string>();
      if (name != "paper-tuned") throw ValidationError("unknown forest preset '" + name + "'");
      p = HyperParams::paper_tuned();
    }
    if (j.contains("n_estimators")) p.n_estimators = j.at("n_estimators").get<int>();
    if (j.contains("max_features")) {
      const auto& mf = j.at("max_features");
      p.max_features = mf.is_string() ? MaxFeatures::parse(mf.get<std::string>()) : MaxFeatures::of(mf.get<double>());
    }
    if (j.contains("min_samples_leaf")) p.min_samples_leaf = j.at("min_samples_leaf").get<int>();
    if (j.contains("max_depth")) {
      p.max_depth = j.at("max_depth").is_null() ? kUnlimitedDepth : j.at("max_depth").get<int>();
    }
    if (j.contains("bootstrap")) p.bootstrap = j.at("bootstrap").get<bool>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid forest parameters: ") + e.what());
  }
  p.validate();
  return p;
}

}  // namespace

std::string params_to_json(const HyperParams& params) { return params_json(params).dump(2); }

HyperParams params_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed parameter JSON: ") + e.what());
  }
  return params_from(j);
}

std::string forest_to_json(const Forest& forest) {
  json j;
  j["format"] = "vigil-forest";
  j["version"] = 1;
  j["params"] = params_json(forest.params);
  j["seed"] = forest.seed;
  j["n_features"] = forest.n_features;
  j["n_train"] = forest.n_train;
  j["oob_r2"] = std::isfinite(forest.oob_r2) ? json(forest.oob_r2) : json(nullptr);
  json trees = json::array();
  for (const auto& tree : forest.trees) {
    json t;
    std::vector<int> feature, left, right;
    std::vector<double> threshold, value;
    std::vector<std::int64_t> cover;
    for (const auto& nd : tree.nodes()) {
      feature.push_back(nd.feature);
      threshold.push_back(nd.threshold);
      left.push_back(nd.left);
      right.push_back(nd.right);
      value.push_back(nd.value);
      cover.push_back(nd.cover);
    }
    t["feature"] = feature;
    t["threshold"] = threshold;
    t["left"] = left;
    t["right"] = right;
    t["value"] = value;
    t["cover"] = cover;
    trees.push_back(std::move(t));
  }
  j["trees"] = std::move(trees);
  return j.dump();
}

Forest forest_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed model JSON: ") + e.what());
  }
  Forest forest;
  try {
    if (j.value("format", std::string{}) != "vigil-forest") throw ValidationError("not a vigil forest model");
    forest.params = params_from(j.at("params"));
    forest.seed = j.at("seed").get<std::uint64_t>();
    forest.n_features = j.at("n_features").get<std::size_t>();
    forest.n_train = j.at("n_train").get<std::size_t>();
    forest.oob_r2 = j.at("oob_r2").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("oob_r2").get<double>();
    for (const auto& t : j.at("trees")) {
      const auto feature = t.at("feature").get<std::vector<int>>();
      const auto threshold = t.at("threshold").get<std::vector<double>>();
      const auto left = t.at("left").get<std::vector<int>>();
      const auto right = t.at("right").get<std::vector<int>>();
      const auto value = t.at("value").get<std::vector<double>>();
      const auto cover = t.at("cover").get<std::vector<std::int64_t>>();
      const std::size_t n = feature.size();
      if (threshold.size() != n || left.size() != n || right.size() != n || value.size() != n || cover.size() != n) {
        throw ValidationError("tree node arrays differ in length");
      }
      std::vector<TreeNode> nodes(n);
      for (std::size_t i = 0; i < n; ++i) {
        nodes[i] = TreeNode{feature[i], threshold[i], left[i], right[i], value[i], cover[i]};
        if (feature[i] >= static_cast<int>(forest.n_features)) throw ValidationError("split feature out of range");
      }
      forest.trees.emplace_back(std::move(nodes));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid model JSON: ") + e.what());
  }
  if (forest.trees.size() != static_cast<std::size_t>(forest.params.n_estimators)) {
    throw ValidationError("model tree count does not match n_estimators");
  }
  // Membership is a pure function of (seed, tree, n_train).
  forest.inbag.resize(forest.trees.size());
  for (std::size_t t = 0; t < forest.trees.size(); ++t) {
    forest.inbag[t] = forest.params.bootstrap ? bootstrap_counts(forest.seed, t, forest.n_train)
                                              : std::vector<std::uint32_t>(forest.n_train, 1);
  }
  return forest;
}

void save_forest(const Forest& forest, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << forest_to_json(forest) << '\n';
}

Forest load_forest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return forest_from_json(buf.str());
}

}  // namespace vigil
