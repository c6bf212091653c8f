#pragma once

#include <map>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "vigil/recording.hpp"

namespace vigil {

enum class TrialOutcome { valid, false_alarm, lapse, timeout };

std::string_view outcome_name(TrialOutcome o);

inline constexpr double kFalseAlarmBelowMs = 100.0;
inline constexpr double kLapseAboveMs = 500.0;
inline constexpr int kSmoothingWindow = 5;

/// rt < 100 -> false alarm, rt > 500 -> lapse, missing -> timeout; both
/// boundaries count as valid.
TrialOutcome classify_trial(std::optional<double> rt_ms);

/// Trailing mean over the current and up to window - 1 preceding values.
std::vector<double> smooth_rt(std::span<const double> valid_rts, int window = kSmoothingWindow);

struct TargetRow {
  int trial = 0;
  std::optional<double> rt_ms_raw;
  TrialOutcome outcome = TrialOutcome::timeout;
  std::optional<double> rt_ms_smoothed;  // set for valid trials only
};

/// Smoothed targets keyed by original trial index (valid trials only).
struct TargetSeries {
  std::map<int, double> smoothed_rt_ms;
  /// Every trial with its classification, for the targets CSV.
  std::vector<TargetRow> rows;

  std::size_t size() const { return smoothed_rt_ms.size(); }
  bool empty() const { return smoothed_rt_ms.empty(); }
};

/// classify -> drop non-valid -> smooth.
TargetSeries build_targets(const EventLog& events, int window = kSmoothingWindow);

}  // namespace vigil
