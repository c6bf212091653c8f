#include "vigil/synth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <map>

#include "vigil/error.hpp"
#include "vigil/montage.hpp"
#include "vigil/parallel.hpp"
#include "vigil/rng.hpp"

namespace vigil {

namespace {

bool is_rate(double r) { return r >= 0.0 && r <= 1.0; }

// Stream ids for derive_seed(seed, participant, stream).
constexpr std::uint64_t kArousalStream = 1;
constexpr std::uint64_t kTrialStream = 2;
constexpr std::uint64_t kSourceStream = 1000;
constexpr std::uint64_t kChannelStream = 2000;

}  // namespace

void SynthConfig::validate() const {
  if (n_participants < 1) throw ValidationError("n_participants must be >= 1");
  if (n_trials < 1) throw ValidationError("n_trials must be >= 1");
  if (!(isi_min_s > 0.0 && isi_min_s < isi_max_s)) throw ValidationError("isi bounds must satisfy 0 < min < max");
  if (!(timeout_s > 0.0 && timeout_s <= 2.0)) throw ValidationError("timeout must lie in (0, 2] s");
  if (feedback_s < 0.0 || lead_in_s < 0.0 || tail_s < 0.0) throw ValidationError("durations must be non-negative");
  if (!(sample_rate_hz > 0.0)) throw ValidationError("sample rate must be positive");
  if (!(arousal_step_s > 0.0) || !(arousal_tau_s > 0.0)) throw ValidationError("arousal step and tau must be positive");
  if (arousal_noise_sd < 0.0 || channel_noise_sd < 0.0 || rt_noise_sd_ms < 0.0) {
    throw ValidationError("noise levels must be non-negative");
  }
  if (!is_rate(false_alarm_rate) || !is_rate(lapse_rate) || !is_rate(timeout_rate) ||
      false_alarm_rate + lapse_rate + timeout_rate > 1.0) {
    throw ValidationError("contamination rates must lie in [0, 1] and sum to at most 1");
  }
  if (!(rt_base_ms > 0.0 && rt_base_ms <= 2000.0)) throw ValidationError("rt_base_ms must lie in (0, 2000]");
  const auto labels = channel_labels();
  if (labels.size() < 2) throw ValidationError("at least two channels are required");
  const Montage& montage = Montage::standard30();
  for (const auto& l : labels) {
    if (!montage.contains(l)) throw ValidationError("channel '" + l + "' is not in the montage");
  }
  for (const auto& c : couplings) {
    const bool a = std::find(labels.begin(), labels.end(), c.chan_a) != labels.end();
    const bool b = std::find(labels.begin(), labels.end(), c.chan_b) != labels.end();
    if (!a || !b || c.chan_a == c.chan_b) {
      throw ValidationError("coupling " + c.chan_a + "-" + c.chan_b + " needs two distinct configured channels");
    }
  }
}

std::vector<std::string> SynthConfig::channel_labels() const {
  return channels.empty() ? Montage::standard30().labels() : channels;
}

double SynthConfig::nominal_duration_s() const {
  const double mean_isi = 0.5 * (isi_min_s + isi_max_s);
  const double mean_trial = rt_base_ms / 1000.0 + feedback_s;
  return lead_in_s + n_trials * (mean_isi + mean_trial) + tail_s;
}

double GroundTruth::at(double t_s) const {
  if (arousal.empty()) return 0.0;
  const double pos = std::max(0.0, t_s / step_s);
  const auto k = static_cast<std::size_t>(pos);
  if (k + 1 >= arousal.size()) return arousal.back();
  const double frac = pos - static_cast<double>(k);
  return arousal[k] + frac * (arousal[k + 1] - arousal[k]);
}

std::string participant_id(int ordinal) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "P%03d", ordinal + 1);
  return buf;
}

Session generate_session(const SynthConfig& config, int ordinal) {
  config.validate();
  if (ordinal < 0) throw ValidationError("participant ordinal must be non-negative");
  const auto p = static_cast<std::uint64_t>(ordinal);
  const std::uint64_t seed = config.seed;

  // Arousal on a fixed grid long enough for the slowest possible session.
  const double max_trial_s = config.isi_max_s + kStimulusWindowMs / 1000.0 + config.feedback_s;
  const double horizon_s = config.lead_in_s + config.n_trials * max_trial_s + config.tail_s + 1.0;
  GroundTruth truth;
  truth.step_s = config.arousal_step_s;
  const auto n_grid = static_cast<std::size_t>(std::ceil(horizon_s / truth.step_s)) + 1;
  truth.arousal.resize(n_grid);
  {
    Rng rng(derive_seed(seed, p, kArousalStream));
    const double decay = std::exp(-truth.step_s / config.arousal_tau_s);
    const double innov = config.arousal_noise_sd * std::sqrt(1.0 - decay * decay);
    const double slope = config.arousal_drift / config.nominal_duration_s();
    double ou = config.arousal_noise_sd > 0.0 ? rng.normal(0.0, config.arousal_noise_sd) : 0.0;
    for (std::size_t k = 0; k < n_grid; ++k) {
      const double t = static_cast<double>(k) * truth.step_s;
      truth.arousal[k] = std::clamp(config.arousal_start - slope * t + ou, 0.0, 1.0);
      if (innov > 0.0) ou = decay * ou + innov * rng.normal();
    }
  }

  // Trials.
  std::vector<Trial> trials;
  trials.reserve(static_cast<std::size_t>(config.n_trials));
  {
    Rng rng(derive_seed(seed, p, kTrialStream));
    double t = config.lead_in_s;
    for (int i = 0; i < config.n_trials; ++i) {
      const double onset = t + rng.uniform(config.isi_min_s, config.isi_max_s);
      const double a = truth.at(onset);
      truth.trial_arousal.push_back(a);
      double rt = config.rt_base_ms + config.rt_fatigue_gain_ms * (1.0 - a);
      if (config.rt_noise_sd_ms > 0.0) rt += rng.normal(0.0, config.rt_noise_sd_ms);
      rt = std::clamp(rt, 1.0, kStimulusWindowMs);
      std::optional<double> response = rt;
      const double u = rng.uniform();
      if (u < config.false_alarm_rate) {
        response = rng.uniform(20.0, 99.0);
      } else if (u < config.false_alarm_rate + config.lapse_rate) {
        response = rng.uniform(501.0, kStimulusWindowMs);
      } else if (u < config.false_alarm_rate + config.lapse_rate + config.timeout_rate) {
        response.reset();
      }
      trials.push_back({i + 1, onset, response});
      const double shown = response ? *response / 1000.0 : config.timeout_s;
      t = onset + shown + config.feedback_s;
    }
    t += config.tail_s;
    truth.arousal.resize(std::min(truth.arousal.size(), static_cast<std::size_t>(std::ceil(t / truth.step_s)) + 1));
  }
  const double duration_s = trials.back().onset_s + kStimulusWindowMs / 1000.0 + config.feedback_s + config.tail_s;
  const auto n_samples = static_cast<std::size_t>(std::ceil(duration_s * config.sample_rate_hz));

  // Signals: per-region sources, per-coupling sources, per-channel noise.
  const auto labels = config.channel_labels();
  const Montage& montage = Montage::standard30();
  const std::size_t n_ch = labels.size();
  std::vector<double> arousal_at(n_samples);
  for (std::size_t s = 0; s < n_samples; ++s) arousal_at[s] = truth.at(static_cast<double>(s) / config.sample_rate_hz);

  std::vector<double> samples(n_ch * n_samples, 0.0);
  parallel_for(n_ch, [&](std::size_t c) {
    Rng rng(derive_seed(seed, p, kChannelStream + c));
    double* dst = samples.data() + c * n_samples;
    if (config.channel_noise_sd > 0.0) {
      for (std::size_t s = 0; s < n_samples; ++s) dst[s] = rng.normal(0.0, config.channel_noise_sd);
    }
  });
  std::vector<double> source(n_samples);
  if (config.region_gain != 0.0) {
    for (std::size_t r = 0; r < kRegionCount; ++r) {
      std::vector<std::size_t> members;
      for (std::size_t c = 0; c < n_ch; ++c) {
        if (static_cast<std::size_t>(montage.region_of(labels[c])) == r) members.push_back(c);
      }
      if (members.empty()) continue;
      Rng rng(derive_seed(seed, p, kSourceStream + r));
      for (auto& v : source) v = config.region_gain * rng.normal();
      for (auto c : members) {
        double* dst = samples.data() + c * n_samples;
        for (std::size_t s = 0; s < n_samples; ++s) dst[s] += source[s];
      }
    }
  }
  for (std::size_t k = 0; k < config.couplings.size(); ++k) {
    const auto& cp = config.couplings[k];
    Rng rng(derive_seed(seed, p, kSourceStream + kRegionCount + k));
    for (std::size_t s = 0; s < n_samples; ++s) {
      const double a = arousal_at[s];
      source[s] = cp.gain * (cp.rises_with_fatigue ? 1.0 - a : a) * rng.normal();
    }
    for (const auto* name : {&cp.chan_a, &cp.chan_b}) {
      const auto c = static_cast<std::size_t>(std::find(labels.begin(), labels.end(), *name) - labels.begin());
      double* dst = samples.data() + c * n_samples;
      for (std::size_t s = 0; s < n_samples; ++s) dst[s] += source[s];
    }
  }
  for (auto& v : samples) v *= config.amplitude_uv;

  return Session{Recording(participant_id(ordinal), labels, config.sample_rate_hz, std::move(samples)),
                 EventLog(std::move(trials)), std::move(truth)};
}

double gaussian_mi_oracle(double rho) {
  if (!(std::abs(rho) < 1.0)) throw ValidationError("correlation must satisfy |rho| < 1");
  return -0.5 * std::log1p(-rho * rho);
}

double discrete_mi_oracle(std::span<const double> joint, std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0 || joint.size() != rows * cols) throw ValidationError("table shape mismatch");
  double total = 0.0;
  for (double v : joint) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("probabilities must be finite and non-negative");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("probability table does not sum to 1");
  std::vector<double> px(rows, 0.0), py(cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      px[i] += joint[i * cols + j];
      py[j] += joint[i * cols + j];
    }
  }
  double mi = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const double pxy = joint[i * cols + j];
      if (pxy > 0.0) mi += pxy * std::log(pxy / (px[i] * py[j]));
    }
  }
  return mi;
}

namespace {

double conditional_value(const RegressionTree& tree, std::size_t node, std::span<const double> x,
                         const std::vector<bool>& known) {
  const auto& nd = tree.node(node);
  if (nd.is_leaf()) return nd.value;
  const auto f = static_cast<std::size_t>(nd.feature);
  const auto l = static_cast<std::size_t>(nd.left);
  const auto r = static_cast<std::size_t>(nd.right);
  if (known[f]) return conditional_value(tree, x[f] <= nd.threshold ? l : r, x, known);
  const double wl = static_cast<double>(tree.node(l).cover);
  const double wr = static_cast<double>(tree.node(r).cover);
  return (wl * conditional_value(tree, l, x, known) + wr * conditional_value(tree, r, x, known)) / (wl + wr);
}

}  // namespace

std::vector<double> brute_shapley(const RegressionTree& tree, std::span<const double> x) {
  std::vector<std::size_t> players;
  for (const auto& nd : tree.nodes()) {
    if (nd.is_leaf()) continue;
    if (nd.cover <= 0) throw ValidationError("tree node has no cover");
    const auto f = static_cast<std::size_t>(nd.feature);
    if (f >= x.size()) throw ValidationError("sample has fewer features than the tree uses");
    if (std::find(players.begin(), players.end(), f) == players.end()) players.push_back(f);
  }
  if (players.size() > 12) throw ValidationError("brute-force Shapley is limited to 12 distinct features");
  std::vector<double> phi(x.size(), 0.0);
  const std::size_t d = players.size();
  if (d == 0) return phi;

  const std::size_t n_subsets = std::size_t{1} << d;
  std::vector<double> value(n_subsets);
  std::vector<bool> known(x.size(), false);
  for (std::size_t mask = 0; mask < n_subsets; ++mask) {
    for (std::size_t i = 0; i < d; ++i) known[players[i]] = (mask >> i) & 1u;
    value[mask] = conditional_value(tree, 0, x, known);
  }
  // weight(s) = s! (d - s - 1)! / d!, exact in double for d <= 12
  std::vector<double> fact(d + 1, 1.0);
  for (std::size_t i = 1; i <= d; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
  std::vector<double> weight(d);
  for (std::size_t s = 0; s < d; ++s) weight[s] = fact[s] * fact[d - s - 1] / fact[d];
  for (std::size_t i = 0; i < d; ++i) {
    const std::size_t bit = std::size_t{1} << i;
    double sum = 0.0;
    for (std::size_t mask = 0; mask < n_subsets; ++mask) {
      if (mask & bit) continue;
      sum += weight[static_cast<std::size_t>(std::popcount(mask))] * (value[mask | bit] - value[mask]);
    }
    phi[players[i]] = sum;
  }
  return phi;
}

}  // namespace vigil
