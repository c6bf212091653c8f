#include "vigil/behavior.hpp"

#include "vigil/error.hpp"

namespace vigil {

std::string_view outcome_name(TrialOutcome o) {
  switch (o) {
    case TrialOutcome::valid: return "valid";
    case TrialOutcome::false_alarm: return "false_alarm";
    case TrialOutcome::lapse: return "lapse";
    case TrialOutcome::timeout: return "timeout";
  }
  return "unknown";
}

TrialOutcome classify_trial(std::optional<double> rt_ms) {
  if (!rt_ms) return TrialOutcome::timeout;
  if (*rt_ms < kFalseAlarmBelowMs) return TrialOutcome::false_alarm;
  if (*rt_ms > kLapseAboveMs) return TrialOutcome::lapse;
  return TrialOutcome::valid;
}

std::vector<double> smooth_rt(std::span<const double> rts, int window) {
  if (window < 1) throw ValidationError("smoothing window must be >= 1");
  std::vector<double> out(rts.size());
  const auto w = static_cast<std::size_t>(window);
  for (std::size_t i = 0; i < rts.size(); ++i) {
    const std::size_t first = i + 1 >= w ? i + 1 - w : 0;
    double sum = 0.0;
    for (std::size_t j = first; j <= i; ++j) sum += rts[j];
    out[i] = sum / static_cast<double>(i - first + 1);
  }
  return out;
}

TargetSeries build_targets(const EventLog& events, int window) {
  TargetSeries series;
  std::vector<double> valid;
  std::vector<std::size_t> valid_rows;
  for (const auto& t : events.trials()) {
    TargetRow row{t.index, t.rt_ms, classify_trial(t.rt_ms), std::nullopt};
    if (row.outcome == TrialOutcome::valid) {
      valid.push_back(*t.rt_ms);
      valid_rows.push_back(series.rows.size());
    }
    series.rows.push_back(row);
  }
  const auto smoothed = smooth_rt(valid, window);
  for (std::size_t i = 0; i < smoothed.size(); ++i) {
    auto& row = series.rows[valid_rows[i]];
    row.rt_ms_smoothed = smoothed[i];
    series.smoothed_rt_ms.emplace(row.trial, smoothed[i]);
  }
  return series;
}

}  // namespace vigil
