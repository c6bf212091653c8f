#include "vigil/recording.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "vigil/error.hpp"

namespace vigil {

namespace fs = std::filesystem;
using nlohmann::json;

Recording::Recording(std::string participant_id, std::vector<std::string> channel_labels,
                     double sample_rate_hz, std::vector<double> samples)
    : participant_id_(std::move(participant_id)),
      labels_(std::move(channel_labels)),
      rate_(sample_rate_hz),
      n_samples_(0),
      samples_(std::move(samples)) {
  if (labels_.empty()) throw ValidationError("recording needs at least one channel");
  if (!(rate_ > 0.0) || !std::isfinite(rate_)) throw ValidationError("sample rate must be positive");
  std::unordered_set<std::string> seen;
  for (const auto& l : labels_) {
    if (!seen.insert(l).second) throw ValidationError("duplicate channel label '" + l + "'");
  }
  if (samples_.size() % labels_.size() != 0) {
    throw ValidationError("sample count is not a multiple of the channel count");
  }
  n_samples_ = samples_.size() / labels_.size();
  if (n_samples_ < 1) throw ValidationError("recording needs at least one sample");
}

std::optional<std::size_t> Recording::channel_index(const std::string& label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == label) return i;
  }
  return std::nullopt;
}

EventLog::EventLog(std::vector<Trial> trials) : trials_(std::move(trials)) {
  for (std::size_t i = 0; i < trials_.size(); ++i) {
    const Trial& t = trials_[i];
    if (i == 0 && t.index != 1) throw ValidationError("trial indices must start at 1");
    if (i > 0 && t.index <= trials_[i - 1].index) {
      throw ValidationError("trial indices must strictly increase (trial " + std::to_string(t.index) + ")");
    }
    if (!std::isfinite(t.onset_s) || t.onset_s < 0.0) {
      throw ValidationError("onset must be finite and >= 0 (trial " + std::to_string(t.index) + ")");
    }
    if (i > 0 && t.onset_s <= trials_[i - 1].onset_s) {
      throw ValidationError("onsets must strictly increase (trial " + std::to_string(t.index) + ")");
    }
    if (t.rt_ms && !(*t.rt_ms > 0.0 && *t.rt_ms <= kStimulusWindowMs)) {
      throw ValidationError("rt_ms outside (0, 2000] (trial " + std::to_string(t.index) + ")");
    }
  }
}

namespace {

static_assert(sizeof(float) == 4);

std::uint32_t to_little(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) {
    return v;
  } else {
    return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
  }
}

template <typename T>
T required(const json& j, const char* key) {
  if (!j.contains(key)) throw ValidationError(std::string("recording header missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("recording header field '") + key + "': " + e.what());
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  return s;
}

template <typename T>
T parse_number(std::string_view field, std::size_t line) {
  field = trim(field);
  T value{};
  const auto* end = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw ValidationError("events line " + std::to_string(line) + ": bad number '" + std::string(field) + "'");
  }
  return value;
}

}  // namespace

Recording load_recording(const fs::path& header_path) {
  std::ifstream in(header_path);
  if (!in) throw ValidationError("cannot open recording header " + header_path.string());
  json header;
  try {
    in >> header;
  } catch (const json::exception& e) {
    throw ValidationError("malformed recording header " + header_path.string() + ": " + e.what());
  }
  if (!header.is_object()) throw ValidationError("recording header must be a JSON object");

  auto id = required<std::string>(header, "participant_id");
  auto labels = required<std::vector<std::string>>(header, "channel_labels");
  const auto rate = required<double>(header, "sample_rate_hz");
  const auto declared = required<std::int64_t>(header, "n_samples");
  const auto data_file = required<std::string>(header, "data_file");
  if (labels.empty()) throw ValidationError("recording header lists no channels");

  const fs::path data_path = header_path.parent_path() / data_file;
  std::error_code ec;
  const auto bytes = fs::file_size(data_path, ec);
  if (ec) throw ValidationError("cannot stat sample file " + data_path.string());
  const std::uint64_t frame = 4ULL * labels.size();
  if (bytes % frame != 0) {
    throw ValidationError("sample file size " + std::to_string(bytes) + " is not divisible by 4 x " +
                          std::to_string(labels.size()) + " channels");
  }
  const std::uint64_t n = bytes / frame;
  if (declared < 0 || static_cast<std::uint64_t>(declared) != n) {
    throw ValidationError("header declares " + std::to_string(declared) + " samples but file holds " +
                          std::to_string(n));
  }

  std::ifstream data(data_path, std::ios::binary);
  if (!data) throw ValidationError("cannot open sample file " + data_path.string());
  std::vector<std::uint32_t> raw(static_cast<std::size_t>(n * labels.size()));
  data.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
  if (!data) throw std::runtime_error("short read from " + data_path.string());

  std::vector<double> samples(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    samples[i] = static_cast<double>(std::bit_cast<float>(to_little(raw[i])));
  }
  return Recording(std::move(id), std::move(labels), rate, std::move(samples));
}

void save_recording(const Recording& rec, const fs::path& header_path, const std::string& data_file_name) {
  json header = {
      {"participant_id", rec.participant_id()},
      {"channel_labels", rec.channel_labels()},
      {"sample_rate_hz", rec.sample_rate_hz()},
      {"n_samples", rec.n_samples()},
      {"data_file", data_file_name},
  };
  if (header_path.has_parent_path()) fs::create_directories(header_path.parent_path());
  {
    std::ofstream out(header_path);
    if (!out) throw std::runtime_error("cannot write " + header_path.string());
    out << header.dump(2) << '\n';
  }
  const auto samples = rec.samples();
  std::vector<std::uint32_t> raw(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    raw[i] = to_little(std::bit_cast<std::uint32_t>(static_cast<float>(samples[i])));
  }
  std::ofstream data(header_path.parent_path() / data_file_name, std::ios::binary);
  if (!data) throw std::runtime_error("cannot write sample file " + data_file_name);
  data.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
}

EventLog parse_events(std::string_view text) {
  std::vector<Trial> trials;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != "trial,onset_s,rt_ms") {
        throw ValidationError("events CSV must start with header 'trial,onset_s,rt_ms'");
      }
      header_seen = true;
      continue;
    }
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
    if (c2 == std::string_view::npos || line.find(',', c2 + 1) != std::string_view::npos) {
      throw ValidationError("events line " + std::to_string(line_no) + ": expected 3 fields");
    }
    Trial t;
    t.index = parse_number<int>(line.substr(0, c1), line_no);
    t.onset_s = parse_number<double>(line.substr(c1 + 1, c2 - c1 - 1), line_no);
    const auto rt = trim(line.substr(c2 + 1));
    if (!rt.empty()) t.rt_ms = parse_number<double>(rt, line_no);
    trials.push_back(t);
  }
  if (!header_seen) throw ValidationError("events CSV is empty");
  return EventLog(std::move(trials));
}

EventLog load_events(const fs::path& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw ValidationError("cannot open events file " + csv_path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_events(buf.str());
}

void save_events(const EventLog& events, const fs::path& csv_path) {
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  std::ofstream out(csv_path);
  if (!out) throw std::runtime_error("cannot write " + csv_path.string());
  out << "trial,onset_s,rt_ms\n";
  out << std::setprecision(17);
  for (const auto& t : events.trials()) {
    out << t.index << ',' << t.onset_s << ',';
    if (t.rt_ms) out << *t.rt_ms;
    out << '\n';
  }
}

}  // namespace vigil
