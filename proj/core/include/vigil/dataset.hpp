#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vigil/behavior.hpp"
#include "vigil/connectivity.hpp"
#include "vigil/forest.hpp"
#include "vigil/matrix.hpp"

namespace vigil {

struct SampleKey {
  std::size_t participant = 0;  // ordinal into Dataset::participants
  int trial = 0;
};

/// Pooled samples for one lag. Row i of x pairs with y[i] and keys[i].
struct Dataset {
  int lag_s = 0;
  std::vector<std::string> participants;
  std::vector<std::string> feature_names;
  std::vector<SampleKey> keys;
  FeatureMatrix x;
  std::vector<double> y;

  std::size_t size() const { return y.size(); }
  bool empty() const { return y.empty(); }
};

struct ParticipantFeatures {
  std::string id;
  std::vector<ConnectivityVector> rows;
  TargetSeries targets;
};

/// Inner join of feature rows (at `lag_s`) and smoothed targets on trial
/// index, concatenated in participant order.
Dataset assemble(std::span<const ParticipantFeatures> participants, int lag_s,
                 std::vector<std::string> feature_names = {});

struct FoldPlan {
  int k = 10;
  std::uint64_t seed = 0;
  bool contiguous = false;
  std::vector<int> fold_of;

  std::vector<std::size_t> test_indices(int fold) const;
  std::vector<std::size_t> train_indices(int fold) const;
};

/// Per participant, samples are shuffled with derive_seed(seed, ordinal)
/// and dealt round-robin starting at fold (ordinal mod k). With
/// `contiguous`, each participant's samples are cut into k blocks in trial
/// order instead.
FoldPlan make_folds(const Dataset& data, int k, std::uint64_t seed, bool contiguous = false);

/// Trains on (x_train, y_train) and returns predictions for x_test.
using FitPredict = std::function<std::vector<double>(const FeatureMatrix& x_train, std::span<const double> y_train,
                                                     const FeatureMatrix& x_test, int fold)>;

struct FoldMetrics {
  int fold = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double rmse = 0.0;
  std::optional<double> r;  // undefined when either side has zero variance
  std::string note;
};

struct EvalReport {
  int lag_s = 0;
  std::vector<FoldMetrics> folds;
  double rmse_mean = 0.0;
  double rmse_sd = 0.0;  // population sd over folds
  /// Over folds with a defined r; NaN when none has one.
  double r_mean = 0.0;
  double r_sd = 0.0;
};

EvalReport evaluate(const Dataset& data, const FoldPlan& plan, const FitPredict& fit_predict);

/// FitPredict for a forest; fold f is fitted with derive_seed(seed, f).
FitPredict forest_fit_predict(const HyperParams& params, std::uint64_t seed);

/// Predicts the training-set mean. The baseline the forest must beat.
FitPredict mean_fit_predict();

// Feature CSV: trial,lag_s,<pair labels...>
struct FeatureTable {
  std::vector<std::string> labels;
  std::vector<ConnectivityVector> rows;
};

void save_features_csv(const std::filesystem::path& path, const std::vector<std::string>& labels,
                       std::span<const ConnectivityVector> rows);
FeatureTable load_features_csv(const std::filesystem::path& path);

// Targets CSV: trial,rt_ms_raw,outcome,rt_ms_smoothed
void save_targets_csv(const std::filesystem::path& path, const TargetSeries& targets);
TargetSeries load_targets_csv(const std::filesystem::path& path);

}  // namespace vigil
