#include "config.hpp"

#include <algorithm>
#include <initializer_list>
#include <set>

#include "output.hpp"
#include "vigil/error.hpp"
#include "vigil/forest.hpp"
#include "vigil/montage.hpp"
#include "vigil/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace vigil::cli {
namespace {

void check_keys(const json& obj, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ValidationError(std::string(where) + " must be an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ValidationError("unknown key '" + key + "' in " + std::string(where));
    }
  }
}

const json& section(const json& root, const char* name) {
  static const json empty = json::object();
  return root.contains(name) ? root.at(name) : empty;
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

std::uint64_t read_seed(const json& obj, const char* key, std::uint64_t fallback) {
  if (!obj.contains(key)) return fallback;
  const auto& v = obj.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
    throw ValidationError(std::string("seed '") + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

std::vector<int> read_lags(const json& v, const char* where) {
  if (!v.is_array() || v.empty()) throw ValidationError(std::string(where) + " must be a non-empty array");
  std::vector<int> lags;
  std::set<int> seen;
  for (const auto& e : v) {
    if (!e.is_number_integer()) throw ValidationError(std::string(where) + " entries must be integers");
    const int lag = e.get<int>();
    if (lag < 0 || lag > 20) throw ValidationError("lag " + std::to_string(lag) + " outside [0, 20]");
    if (!seen.insert(lag).second) throw ValidationError("duplicate lag " + std::to_string(lag));
    lags.push_back(lag);
  }
  return lags;
}

void parse_synth(const json& s, SynthConfig& c) {
  check_keys(s, "synth",
             {"n_participants", "n_trials", "isi_min_s", "isi_max_s", "timeout_s", "feedback_s", "lead_in_s",
              "tail_s", "sample_rate_hz", "channels", "arousal_start", "arousal_drift", "arousal_noise_sd",
              "arousal_tau_s", "arousal_step_s", "amplitude_uv", "region_gain", "channel_noise_sd", "couplings",
              "rt_base_ms", "rt_fatigue_gain_ms", "rt_noise_sd_ms", "false_alarm_rate", "lapse_rate",
              "timeout_rate", "seed"});
  read(s, "n_participants", c.n_participants);
  read(s, "n_trials", c.n_trials);
  read(s, "isi_min_s", c.isi_min_s);
  read(s, "isi_max_s", c.isi_max_s);
  read(s, "timeout_s", c.timeout_s);
  read(s, "feedback_s", c.feedback_s);
  read(s, "lead_in_s", c.lead_in_s);
  read(s, "tail_s", c.tail_s);
  read(s, "sample_rate_hz", c.sample_rate_hz);
  read(s, "channels", c.channels);
  read(s, "arousal_start", c.arousal_start);
  read(s, "arousal_drift", c.arousal_drift);
  read(s, "arousal_noise_sd", c.arousal_noise_sd);
  read(s, "arousal_tau_s", c.arousal_tau_s);
  read(s, "arousal_step_s", c.arousal_step_s);
  read(s, "amplitude_uv", c.amplitude_uv);
  read(s, "region_gain", c.region_gain);
  read(s, "channel_noise_sd", c.channel_noise_sd);
  read(s, "rt_base_ms", c.rt_base_ms);
  read(s, "rt_fatigue_gain_ms", c.rt_fatigue_gain_ms);
  read(s, "rt_noise_sd_ms", c.rt_noise_sd_ms);
  read(s, "false_alarm_rate", c.false_alarm_rate);
  read(s, "lapse_rate", c.lapse_rate);
  read(s, "timeout_rate", c.timeout_rate);
  if (s.contains("couplings")) {
    c.couplings.clear();
    for (const auto& e : s.at("couplings")) {
      check_keys(e, "synth.couplings[]", {"chan_a", "chan_b", "gain", "rises_with_fatigue"});
      CouplingSpec cs;
      cs.chan_a = e.at("chan_a").get<std::string>();
      cs.chan_b = e.at("chan_b").get<std::string>();
      read(e, "gain", cs.gain);
      read(e, "rises_with_fatigue", cs.rises_with_fatigue);
      c.couplings.push_back(cs);
    }
  }
}

json synth_json(const SynthConfig& c) {
  json couplings = json::array();
  for (const auto& cs : c.couplings) {
    couplings.push_back(
        {{"chan_a", cs.chan_a}, {"chan_b", cs.chan_b}, {"gain", cs.gain}, {"rises_with_fatigue", cs.rises_with_fatigue}});
  }
  return {{"n_participants", c.n_participants},
          {"n_trials", c.n_trials},
          {"isi_min_s", c.isi_min_s},
          {"isi_max_s", c.isi_max_s},
          {"timeout_s", c.timeout_s},
          {"feedback_s", c.feedback_s},
          {"lead_in_s", c.lead_in_s},
          {"tail_s", c.tail_s},
          {"sample_rate_hz", c.sample_rate_hz},
          {"channels", c.channel_labels()},
          {"arousal_start", c.arousal_start},
          {"arousal_drift", c.arousal_drift},
          {"arousal_noise_sd", c.arousal_noise_sd},
          {"arousal_tau_s", c.arousal_tau_s},
          {"arousal_step_s", c.arousal_step_s},
          {"amplitude_uv", c.amplitude_uv},
          {"region_gain", c.region_gain},
          {"channel_noise_sd", c.channel_noise_sd},
          {"couplings", couplings},
          {"rt_base_ms", c.rt_base_ms},
          {"rt_fatigue_gain_ms", c.rt_fatigue_gain_ms},
          {"rt_noise_sd_ms", c.rt_noise_sd_ms},
          {"false_alarm_rate", c.false_alarm_rate},
          {"lapse_rate", c.lapse_rate},
          {"timeout_rate", c.timeout_rate},
          {"seed", c.seed}};
}

void parse_space(const json& s, SearchSpace& space) {
  check_keys(s, "tune.space", {"max_features", "min_samples_leaf", "max_depth"});
  if (s.contains("max_features")) {
    space.max_features.clear();
    for (const auto& e : s.at("max_features")) {
      space.max_features.push_back(e.is_string() ? MaxFeatures::parse(e.get<std::string>())
                                                 : MaxFeatures::of(e.get<double>()));
    }
  }
  auto range = [&](const char* key, int& lo, int& hi) {
    if (!s.contains(key)) return;
    const auto& r = s.at(key);
    if (!r.is_array() || r.size() != 2) throw ValidationError(std::string("tune.space.") + key + " must be [lo, hi]");
    lo = r[0].get<int>();
    hi = r[1].get<int>();
  };
  range("min_samples_leaf", space.min_samples_leaf_lo, space.min_samples_leaf_hi);
  range("max_depth", space.max_depth_lo, space.max_depth_hi);
  space.validate();
}

RunConfig parse_impl(const json& j, std::optional<std::uint64_t> seed_override,
                     std::optional<fs::path> out_override) {
  check_keys(j, "config",
             {"seed", "paths", "lags", "window", "preprocess", "extract", "forest", "tune", "cv", "synth", "explain",
              "stats"});
  RunConfig c;

  c.seeds.master = seed_override ? *seed_override : read_seed(j, "seed", 0);

  const json& paths = section(j, "paths");
  check_keys(paths, "paths", {"output", "sessions", "preprocessed", "montage"});
  if (paths.contains("output")) c.output = paths.at("output").get<std::string>();
  if (out_override) c.output = *out_override;
  c.sessions = paths.contains("sessions") ? fs::path(paths.at("sessions").get<std::string>()) : c.output / "sessions";
  c.preprocessed =
      paths.contains("preprocessed") ? fs::path(paths.at("preprocessed").get<std::string>()) : c.output / "preprocessed";
  if (paths.contains("montage")) c.montage = fs::path(paths.at("montage").get<std::string>());

  if (j.contains("lags")) {
    c.lags = read_lags(j.at("lags"), "lags");
  } else {
    for (int l = 0; l <= 20; ++l) c.lags.push_back(l);
  }

  const json& w = section(j, "window");
  check_keys(w, "window", {"window_len_s", "epoch_len_s", "n_bins", "first_trial", "bias_correction"});
  read(w, "window_len_s", c.window.window_len_s);
  read(w, "epoch_len_s", c.window.epoch_len_s);
  read(w, "n_bins", c.window.n_bins);
  read(w, "first_trial", c.window.first_trial);
  read(w, "bias_correction", c.window.bias_correction);
  c.window.validate();

  const json& pp = section(j, "preprocess");
  check_keys(pp, "preprocess", {"low_hz", "high_hz", "order", "downsample_factor", "common_average"});
  read(pp, "low_hz", c.preprocess.low_hz);
  read(pp, "high_hz", c.preprocess.high_hz);
  read(pp, "order", c.preprocess.order);
  read(pp, "downsample_factor", c.preprocess.downsample_factor);
  read(pp, "common_average", c.preprocess.common_average);
  if (c.preprocess.downsample_factor < 1) throw ValidationError("preprocess.downsample_factor must be >= 1");

  const json& ex = section(j, "extract");
  check_keys(ex, "extract", {"source"});
  if (ex.contains("source")) {
    const auto s = ex.at("source").get<std::string>();
    if (s == "preprocessed") {
      c.extract_source = ExtractSource::preprocessed;
    } else if (s == "sessions") {
      c.extract_source = ExtractSource::sessions;
    } else if (s == "inline") {
      c.extract_source = ExtractSource::inline_preprocess;
    } else {
      throw ValidationError("extract.source must be preprocessed, sessions or inline");
    }
  }

  c.forest = section(j, "forest");
  check_keys(c.forest, "forest",
             {"preset", "n_estimators", "max_features", "min_samples_leaf", "max_depth", "bootstrap", "seed"});
  if (c.forest.contains("preset")) {
    const auto p = c.forest.at("preset").get<std::string>();
    if (p != "paper-tuned" && p != "tuned" && p != "default") {
      throw ValidationError("forest.preset must be paper-tuned, tuned or default");
    }
  }
  {
    json probe = c.forest;
    probe.erase("seed");
    if (probe.value("preset", "") != "paper-tuned") probe.erase("preset");
    (void)params_from_json(probe.dump());
  }
  c.seeds.forest = read_seed(c.forest, "seed", derive_seed(c.seeds.master, 2));
  c.forest.erase("seed");

  const json& t = section(j, "tune");
  check_keys(t, "tune", {"n_trials", "gamma", "n_startup", "n_candidates", "prior_weight", "seed", "lag", "space"});
  read(t, "n_trials", c.tpe.n_trials);
  read(t, "gamma", c.tpe.gamma);
  read(t, "n_startup", c.tpe.n_startup);
  read(t, "n_candidates", c.tpe.n_candidates);
  read(t, "prior_weight", c.tpe.prior_weight);
  c.seeds.tune = read_seed(t, "seed", derive_seed(c.seeds.master, 4));
  c.tpe.seed = c.seeds.tune;
  c.tpe.validate();
  if (t.contains("lag")) {
    c.tune_lag = t.at("lag").get<int>();
    if (std::find(c.lags.begin(), c.lags.end(), *c.tune_lag) == c.lags.end()) {
      throw ValidationError("tune.lag must be one of the configured lags");
    }
  }
  if (t.contains("space")) parse_space(t.at("space"), c.space);

  const json& cv = section(j, "cv");
  check_keys(cv, "cv", {"k", "seed", "contiguous"});
  read(cv, "k", c.cv_k);
  read(cv, "contiguous", c.cv_contiguous);
  if (c.cv_k < 2) throw ValidationError("cv.k must be >= 2");
  c.seeds.cv = read_seed(cv, "seed", derive_seed(c.seeds.master, 3));

  const json& sy = section(j, "synth");
  parse_synth(sy, c.synth);
  c.seeds.synth = read_seed(sy, "seed", derive_seed(c.seeds.master, 1));
  c.synth.seed = c.seeds.synth;
  c.synth.validate();

  const json& e = section(j, "explain");
  check_keys(e, "explain", {"lags", "max_samples", "top_k"});
  c.explain_lags = e.contains("lags") ? read_lags(e.at("lags"), "explain.lags") : c.lags;
  for (int l : c.explain_lags) {
    if (std::find(c.lags.begin(), c.lags.end(), l) == c.lags.end()) {
      throw ValidationError("explain.lags must be a subset of lags");
    }
  }
  read(e, "max_samples", c.explain_max_samples);
  read(e, "top_k", c.top_k);
  if (c.top_k < 1) throw ValidationError("explain.top_k must be >= 1");

  const json& st = section(j, "stats");
  check_keys(st, "stats", {"alpha", "merge_groups", "behavior_fraction"});
  read(st, "alpha", c.alpha);
  read(st, "merge_groups", c.merge_groups);
  read(st, "behavior_fraction", c.behavior_fraction);
  if (!(c.alpha > 0.0 && c.alpha < 1.0)) throw ValidationError("stats.alpha must be in (0, 1)");
  if (!(c.behavior_fraction > 0.0 && c.behavior_fraction <= 0.5)) {
    throw ValidationError("stats.behavior_fraction must be in (0, 0.5]");
  }

  json space_mf = json::array();
  for (const auto& mf : c.space.max_features) {
    if (mf.kind == MaxFeatures::Kind::fraction) {
      space_mf.push_back(mf.fraction);
    } else {
      space_mf.push_back(mf.to_string());
    }
  }
  c.effective = {
      {"lags", c.lags},
      {"window",
       {{"window_len_s", c.window.window_len_s},
        {"epoch_len_s", c.window.epoch_len_s},
        {"n_bins", c.window.n_bins},
        {"first_trial", c.window.first_trial},
        {"bias_correction", c.window.bias_correction}}},
      {"preprocess",
       {{"low_hz", c.preprocess.low_hz},
        {"high_hz", c.preprocess.high_hz},
        {"order", c.preprocess.order},
        {"downsample_factor", c.preprocess.downsample_factor},
        {"common_average", c.preprocess.common_average}}},
      {"extract", {{"source", extract_source_name(c.extract_source)}}},
      {"forest", c.forest},
      {"tune",
       {{"n_trials", c.tpe.n_trials},
        {"gamma", c.tpe.gamma},
        {"n_startup", c.tpe.n_startup},
        {"n_candidates", c.tpe.n_candidates},
        {"prior_weight", c.tpe.prior_weight},
        {"lag", c.tune_lag ? json(*c.tune_lag) : json(nullptr)},
        {"space",
         {{"max_features", space_mf},
          {"min_samples_leaf", {c.space.min_samples_leaf_lo, c.space.min_samples_leaf_hi}},
          {"max_depth", {c.space.max_depth_lo, c.space.max_depth_hi}}}}}},
      {"cv", {{"k", c.cv_k}, {"contiguous", c.cv_contiguous}}},
      {"synth", synth_json(c.synth)},
      {"explain", {{"lags", c.explain_lags}, {"max_samples", c.explain_max_samples}, {"top_k", c.top_k}}},
      {"stats", {{"alpha", c.alpha}, {"merge_groups", c.merge_groups}, {"behavior_fraction", c.behavior_fraction}}},
      {"seeds",
       {{"master", c.seeds.master},
        {"synth", c.seeds.synth},
        {"forest", c.seeds.forest},
        {"cv", c.seeds.cv},
        {"tune", c.seeds.tune}}},
  };
  if (c.montage) {
    json entries = json::array();
    for (const auto& [label, region] : Montage::from_json_file(*c.montage).entries()) {
      entries.push_back({label, std::string(region_code(region))});
    }
    c.effective["montage"] = entries;
  }
  c.hash = hex64(fnv1a64(c.effective.dump()));
  return c;
}

}  // namespace

std::string extract_source_name(ExtractSource s) {
  switch (s) {
    case ExtractSource::preprocessed: return "preprocessed";
    case ExtractSource::sessions: return "sessions";
    case ExtractSource::inline_preprocess: return "inline";
  }
  return "preprocessed";
}

RunConfig parse_config(const json& j, std::optional<std::uint64_t> seed_override,
                       std::optional<fs::path> out_override) {
  try {
    return parse_impl(j, seed_override, out_override);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid config: ") + e.what());
  }
}

RunConfig load_config(const fs::path& path, std::optional<std::uint64_t> seed_override,
                      std::optional<fs::path> out_override) {
  if (!fs::is_regular_file(path)) throw ValidationError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ValidationError("malformed config " + path.string() + ": " + e.what());
  }
  return parse_config(j, seed_override, out_override);
}

}  // namespace vigil::cli
