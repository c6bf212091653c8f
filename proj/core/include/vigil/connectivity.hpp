#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vigil/recording.hpp"

namespace vigil {

/// Number of unordered channel pairs, n(n-1)/2.
constexpr std::size_t pair_count(std::size_t n_channels) { return n_channels * (n_channels - 1) / 2; }

/// Canonical flat index of channel pair (i, j), i < j < n:
/// k = i(2n - i - 1)/2 + (j - i - 1).
std::size_t pair_index(std::size_t i, std::size_t j, std::size_t n_channels);

/// Inverse of pair_index.
std::pair<std::size_t, std::size_t> unpair(std::size_t k, std::size_t n_channels);

/// "<chanA>-<chanB>" labels in canonical pair order.
std::vector<std::string> pair_labels(const std::vector<std::string>& channel_labels);

/// Equal-frequency discretization: the sample with stable sorted rank r gets
/// label floor(r * B / N). Requires N >= B >= 2 and finite values.
std::vector<std::uint16_t> quantile_bins(std::span<const double> series, int n_bins);

/// B x B contingency counts, row = x label, column = y label.
class JointHistogram {
 public:
  JointHistogram(int n_bins, std::vector<std::uint64_t> counts);

  static JointHistogram from_labels(std::span<const std::uint16_t> x, std::span<const std::uint16_t> y,
                                    int n_bins);

  int n_bins() const { return bins_; }
  std::uint64_t total() const { return total_; }
  std::uint64_t count(int x, int y) const { return counts_[static_cast<std::size_t>(x * bins_ + y)]; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }

 private:
  int bins_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
};

/// Plug-in mutual information in nats, with 0 ln 0 = 0.
double mi_from_joint(const JointHistogram& h);

/// Quantile-bins both series and returns their plug-in mutual information.
double epoch_mi(std::span<const double> x, std::span<const double> y, int n_bins);

struct WindowSpec {
  int lag_s = 0;
  int window_len_s = 5;
  int epoch_len_s = 1;
  int n_bins = 8;
  /// Trials with a smaller index are not extracted.
  int first_trial = 9;
  /// Miller-Madow correction; off by default.
  bool bias_correction = false;

  void validate() const;
};

struct ConnectivityVector {
  std::vector<double> values;  // canonical pair order, nats
  int trial_index = 0;
  int lag_s = 0;
  double window_end_s = 0.0;
};

/// First sample of the epoch starting at `t_s`: floor(t_s * rate).
std::size_t epoch_first_sample(double t_s, double rate);

/// Mean over the window's epochs of the per-pair epoch MI, for the window
/// [window_end - window_len, window_end).
ConnectivityVector window_features(const Recording& rec, double window_end_s, const WindowSpec& spec);

struct LaggedFeatures {
  std::vector<ConnectivityVector> rows;
  std::size_t skipped = 0;  // eligible trials whose window left the recording
};

/// Window features for every trial with index >= spec.first_trial, with the
/// window ending spec.lag_s seconds before the stimulus onset.
LaggedFeatures extract_lagged(const Recording& rec, const EventLog& events, const WindowSpec& spec);

}  // namespace vigil
