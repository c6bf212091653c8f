#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vigil {

/// Multichannel sample matrix, channel-major, amplitudes in microvolts.
class Recording {
 public:
  /// `samples` holds all of channel 0, then channel 1, and so on.
  /// Throws ValidationError when the invariants do not hold.
  Recording(std::string participant_id, std::vector<std::string> channel_labels,
            double sample_rate_hz, std::vector<double> samples);

  const std::string& participant_id() const { return participant_id_; }
  const std::vector<std::string>& channel_labels() const { return labels_; }
  double sample_rate_hz() const { return rate_; }
  std::size_t n_channels() const { return labels_.size(); }
  std::size_t n_samples() const { return n_samples_; }
  double duration_s() const { return static_cast<double>(n_samples_) / rate_; }

  std::span<const double> channel(std::size_t c) const {
    return {samples_.data() + c * n_samples_, n_samples_};
  }
  std::span<const double> samples() const { return samples_; }

  std::optional<std::size_t> channel_index(const std::string& label) const;

 private:
  std::string participant_id_;
  std::vector<std::string> labels_;
  double rate_;
  std::size_t n_samples_;
  std::vector<double> samples_;
};

/// Reaction in milliseconds; nullopt marks a timeout.
struct Trial {
  int index = 0;
  double onset_s = 0.0;
  std::optional<double> rt_ms;
};

/// Validated, ordered trial log. Indices start at 1 and strictly increase,
/// onsets are non-negative and strictly increase, and every present rt_ms
/// lies in (0, 2000].
class EventLog {
 public:
  EventLog() = default;
  explicit EventLog(std::vector<Trial> trials);

  const std::vector<Trial>& trials() const { return trials_; }
  std::size_t size() const { return trials_.size(); }
  bool empty() const { return trials_.empty(); }

 private:
  std::vector<Trial> trials_;
};

inline constexpr double kStimulusWindowMs = 2000.0;

/// Reads the JSON header {participant_id, channel_labels, sample_rate_hz,
/// n_samples, data_file}; data_file is resolved relative to the header.
/// The sample file is raw little-endian float32, channel-major.
Recording load_recording(const std::filesystem::path& header_path);

/// Writes the header and `data_file_name` (placed next to the header).
/// Samples are narrowed to float32.
void save_recording(const Recording& rec, const std::filesystem::path& header_path,
                    const std::string& data_file_name);

/// CSV with header `trial,onset_s,rt_ms`; an empty rt_ms field is a timeout.
EventLog load_events(const std::filesystem::path& csv_path);
EventLog parse_events(std::string_view csv_text);
void save_events(const EventLog& events, const std::filesystem::path& csv_path);

}  // namespace vigil
