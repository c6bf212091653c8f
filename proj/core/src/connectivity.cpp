#include "vigil/connectivity.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vigil/error.hpp"
#include "vigil/log.hpp"
#include "vigil/parallel.hpp"

namespace vigil {

std::size_t pair_index(std::size_t i, std::size_t j, std::size_t n) {
  if (!(i < j && j < n)) throw ValidationError("pair_index requires i < j < n");
  return i * (2 * n - i - 1) / 2 + (j - i - 1);
}

std::pair<std::size_t, std::size_t> unpair(std::size_t k, std::size_t n) {
  if (n < 2 || k >= pair_count(n)) throw ValidationError("pair index out of range");
  std::size_t i = 0;
  std::size_t row_start = 0;
  while (row_start + (n - i - 1) <= k) {
    row_start += n - i - 1;
    ++i;
  }
  return {i, i + 1 + (k - row_start)};
}

std::vector<std::string> pair_labels(const std::vector<std::string>& labels) {
  std::vector<std::string> out;
  out.reserve(pair_count(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t j = i + 1; j < labels.size(); ++j) out.push_back(labels[i] + "-" + labels[j]);
  }
  return out;
}

std::vector<std::uint16_t> quantile_bins(std::span<const double> series, int n_bins) {
  if (n_bins < 2 || n_bins > 65535) throw ValidationError("bin count must be in [2, 65535]");
  const std::size_t n = series.size();
  if (n < static_cast<std::size_t>(n_bins)) throw ValidationError("series shorter than the bin count");
  for (double v : series) {
    if (!std::isfinite(v)) throw ValidationError("series contains a non-finite value");
  }
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return series[a] < series[b]; });
  std::vector<std::uint16_t> labels(n);
  const auto bins = static_cast<std::uint64_t>(n_bins);
  for (std::size_t r = 0; r < n; ++r) {
    labels[order[r]] = static_cast<std::uint16_t>(static_cast<std::uint64_t>(r) * bins / n);
  }
  return labels;
}

JointHistogram::JointHistogram(int n_bins, std::vector<std::uint64_t> counts)
    : bins_(n_bins), counts_(std::move(counts)) {
  if (bins_ < 1) throw ValidationError("histogram needs at least one bin");
  if (counts_.size() != static_cast<std::size_t>(bins_) * static_cast<std::size_t>(bins_)) {
    throw ValidationError("histogram counts must have B*B entries");
  }
  for (auto c : counts_) total_ += c;
  if (total_ == 0) throw ValidationError("histogram is empty");
}

JointHistogram JointHistogram::from_labels(std::span<const std::uint16_t> x, std::span<const std::uint16_t> y,
                                           int n_bins) {
  if (x.size() != y.size()) throw ValidationError("label series differ in length");
  const auto b = static_cast<std::size_t>(n_bins);
  std::vector<std::uint64_t> counts(b * b, 0);
  for (std::size_t t = 0; t < x.size(); ++t) {
    if (x[t] >= b || y[t] >= b) throw ValidationError("label outside [0, B)");
    ++counts[x[t] * b + y[t]];
  }
  return JointHistogram(n_bins, std::move(counts));
}

double mi_from_joint(const JointHistogram& h) {
  const int b = h.n_bins();
  const double n = static_cast<double>(h.total());
  std::vector<double> px(static_cast<std::size_t>(b), 0.0);
  std::vector<double> py(static_cast<std::size_t>(b), 0.0);
  for (int x = 0; x < b; ++x) {
    for (int y = 0; y < b; ++y) {
      const double p = static_cast<double>(h.count(x, y)) / n;
      px[static_cast<std::size_t>(x)] += p;
      py[static_cast<std::size_t>(y)] += p;
    }
  }
  auto term = [&](int x, int y) {
    const auto c = h.count(x, y);
    if (c == 0) return 0.0;
    const double p = static_cast<double>(c) / n;
    return p * std::log(p / (px[static_cast<std::size_t>(x)] * py[static_cast<std::size_t>(y)]));
  };
  // Cells (x, y) and (y, x) are added as a pair so that transposing the
  // table gives a bitwise-identical result.
  double mi = 0.0;
  for (int x = 0; x < b; ++x) {
    mi += term(x, x);
    for (int y = x + 1; y < b; ++y) mi += term(x, y) + term(y, x);
  }
  return mi;
}

double epoch_mi(std::span<const double> x, std::span<const double> y, int n_bins) {
  if (x.size() != y.size()) throw ValidationError("epoch series differ in length");
  const auto lx = quantile_bins(x, n_bins);
  const auto ly = quantile_bins(y, n_bins);
  return mi_from_joint(JointHistogram::from_labels(lx, ly, n_bins));
}

void WindowSpec::validate() const {
  if (lag_s < 0) throw ValidationError("lag must be >= 0");
  if (window_len_s < 1 || epoch_len_s < 1 || window_len_s % epoch_len_s != 0) {
    throw ValidationError("window length must be a positive multiple of the epoch length");
  }
  if (n_bins < 2) throw ValidationError("bin count must be >= 2");
}

std::size_t epoch_first_sample(double t_s, double rate) {
  return static_cast<std::size_t>(std::floor(t_s * rate));
}

namespace {

// Plug-in MI from counts using a precomputed c ln c table:
// I = ln N + (sum c_xy ln c_xy - sum c_x ln c_x - sum c_y ln c_y) / N.
class EpochMiKernel {
 public:
  EpochMiKernel(int n_bins, std::size_t epoch_len, bool bias_correction)
      : bins_(static_cast<std::size_t>(n_bins)),
        n_(epoch_len),
        bias_correction_(bias_correction),
        xlogx_(epoch_len + 1, 0.0),
        hist_(bins_ * bins_),
        marg_x_(bins_),
        marg_y_(bins_) {
    for (std::size_t c = 1; c <= epoch_len; ++c) xlogx_[c] = static_cast<double>(c) * std::log(static_cast<double>(c));
  }

  double operator()(const std::uint16_t* lx, const std::uint16_t* ly) {
    std::fill(hist_.begin(), hist_.end(), 0u);
    for (std::size_t t = 0; t < n_; ++t) ++hist_[lx[t] * bins_ + ly[t]];
    std::fill(marg_x_.begin(), marg_x_.end(), 0u);
    std::fill(marg_y_.begin(), marg_y_.end(), 0u);
    std::size_t occupied = 0;
    for (std::size_t x = 0; x < bins_; ++x) {
      for (std::size_t y = 0; y < bins_; ++y) {
        const auto c = hist_[x * bins_ + y];
        marg_x_[x] += c;
        marg_y_[y] += c;
        occupied += c > 0;
      }
    }
    double joint = 0.0;
    for (std::size_t x = 0; x < bins_; ++x) {
      joint += xlogx_[hist_[x * bins_ + x]];
      for (std::size_t y = x + 1; y < bins_; ++y) joint += xlogx_[hist_[x * bins_ + y]] + xlogx_[hist_[y * bins_ + x]];
    }
    double mx = 0.0;
    double my = 0.0;
    std::size_t occ_x = 0;
    std::size_t occ_y = 0;
    for (std::size_t b = 0; b < bins_; ++b) {
      mx += xlogx_[marg_x_[b]];
      my += xlogx_[marg_y_[b]];
      occ_x += marg_x_[b] > 0;
      occ_y += marg_y_[b] > 0;
    }
    const double n = static_cast<double>(n_);
    double mi = std::log(n) + (joint - (mx + my)) / n;
    if (bias_correction_) {
      mi += (static_cast<double>(occupied) - static_cast<double>(occ_x) - static_cast<double>(occ_y) + 1.0) / (2.0 * n);
    }
    return std::max(mi, 0.0);
  }

 private:
  std::size_t bins_;
  std::size_t n_;
  bool bias_correction_;
  std::vector<double> xlogx_;
  std::vector<std::uint32_t> hist_;
  std::vector<std::uint32_t> marg_x_;
  std::vector<std::uint32_t> marg_y_;
};

}  // namespace

ConnectivityVector window_features(const Recording& rec, double window_end_s, const WindowSpec& spec) {
  spec.validate();
  const double rate = rec.sample_rate_hz();
  const double start = window_end_s - spec.window_len_s;
  if (!(start >= 0.0) || epoch_first_sample(window_end_s, rate) > rec.n_samples()) {
    throw ValidationError("window [" + std::to_string(start) + ", " + std::to_string(window_end_s) +
                          ") lies outside the recording");
  }
  const std::size_t nc = rec.n_channels();
  const std::size_t n_epochs = static_cast<std::size_t>(spec.window_len_s / spec.epoch_len_s);
  const std::size_t n_pairs = pair_count(nc);

  ConnectivityVector out;
  out.values.assign(n_pairs, 0.0);
  out.lag_s = spec.lag_s;
  out.window_end_s = window_end_s;

  std::vector<std::uint16_t> labels;
  for (std::size_t e = 0; e < n_epochs; ++e) {
    const double a = start + static_cast<double>(e * static_cast<std::size_t>(spec.epoch_len_s));
    const std::size_t first = epoch_first_sample(a, rate);
    const std::size_t last = std::min(epoch_first_sample(a + spec.epoch_len_s, rate), rec.n_samples());
    const std::size_t len = last - first;
    if (len < static_cast<std::size_t>(spec.n_bins)) throw ValidationError("epoch has fewer samples than bins");
    labels.resize(nc * len);
    for (std::size_t c = 0; c < nc; ++c) {
      const auto l = quantile_bins(rec.channel(c).subspan(first, len), spec.n_bins);
      std::copy(l.begin(), l.end(), labels.begin() + static_cast<std::ptrdiff_t>(c * len));
    }
    EpochMiKernel kernel(spec.n_bins, len, spec.bias_correction);
    std::size_t k = 0;
    for (std::size_t i = 0; i < nc; ++i) {
      for (std::size_t j = i + 1; j < nc; ++j, ++k) {
        out.values[k] += kernel(labels.data() + i * len, labels.data() + j * len);
      }
    }
  }
  for (auto& v : out.values) v /= static_cast<double>(n_epochs);
  return out;
}

LaggedFeatures extract_lagged(const Recording& rec, const EventLog& events, const WindowSpec& spec) {
  spec.validate();
  std::vector<const Trial*> eligible;
  LaggedFeatures result;
  for (const auto& t : events.trials()) {
    if (t.index < spec.first_trial) continue;
    const double end = t.onset_s - spec.lag_s;
    const double start = end - spec.window_len_s;
    if (start < 0.0 || end > rec.duration_s()) {
      ++result.skipped;
      log::debug("skip trial " + std::to_string(t.index) + ": window outside recording");
      continue;
    }
    eligible.push_back(&t);
  }
  result.rows.resize(eligible.size());
  parallel_for(eligible.size(), [&](std::size_t i) {
    const Trial& t = *eligible[i];
    result.rows[i] = window_features(rec, t.onset_s - spec.lag_s, spec);
    result.rows[i].trial_index = t.index;
  });
  if (result.skipped > 0) {
    log::info(rec.participant_id() + ": skipped " + std::to_string(result.skipped) + " trial(s) at lag " +
              std::to_string(spec.lag_s) + " s (window outside recording)");
  }
  return result;
}

}  // namespace vigil
