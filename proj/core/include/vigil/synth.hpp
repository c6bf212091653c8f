#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vigil/forest.hpp"
#include "vigil/recording.hpp"

namespace vigil {

/// A channel pair sharing a latent source whose gain follows arousal a(t):
/// gain * (1 - a) when `rises_with_fatigue`, gain * a otherwise.
struct CouplingSpec {
  std::string chan_a;
  std::string chan_b;
  double gain = 1.0;
  bool rises_with_fatigue = true;
};

struct SynthConfig {
  int n_participants = 30;
  int n_trials = 400;
  double isi_min_s = 2.0;
  double isi_max_s = 10.0;
  double timeout_s = 2.0;
  double feedback_s = 1.0;
  double lead_in_s = 2.0;
  double tail_s = 3.0;
  double sample_rate_hz = 500.0;
  /// Empty means the standard 30-channel montage.
  std::vector<std::string> channels;

  // Arousal: linear decline from `arousal_start` by `arousal_drift` over the
  // nominal session, plus Ornstein-Uhlenbeck noise, clamped to [0, 1].
  double arousal_start = 1.0;
  double arousal_drift = 0.8;
  double arousal_noise_sd = 0.08;
  double arousal_tau_s = 60.0;
  double arousal_step_s = 0.1;

  double amplitude_uv = 10.0;
  double region_gain = 0.5;
  double channel_noise_sd = 1.0;
  std::vector<CouplingSpec> couplings{{"O1", "P7", 1.5, true}, {"O1", "Oz", 1.5, false}};

  double rt_base_ms = 300.0;
  double rt_fatigue_gain_ms = 120.0;
  double rt_noise_sd_ms = 20.0;

  double false_alarm_rate = 0.02;
  double lapse_rate = 0.03;
  double timeout_rate = 0.01;

  std::uint64_t seed = 0;

  void validate() const;
  std::vector<std::string> channel_labels() const;
  /// Expected session length used to scale the arousal drift.
  double nominal_duration_s() const;
};

struct GroundTruth {
  double step_s = 0.1;
  std::vector<double> arousal;  // arousal[k] at t = k * step_s
  std::vector<double> trial_arousal;  // at each trial onset

  double at(double t_s) const;
};

struct Session {
  Recording recording;
  EventLog events;
  GroundTruth truth;
};

std::string participant_id(int ordinal);

/// Deterministic in (config.seed, ordinal).
Session generate_session(const SynthConfig& config, int participant_ordinal);

/// Closed-form MI of a bivariate normal with correlation rho, in nats.
double gaussian_mi_oracle(double rho);

/// Eq.-style double sum over a row-major probability table.
double discrete_mi_oracle(std::span<const double> joint, std::size_t rows, std::size_t cols);

/// Shapley values of the cover-conditional expectation game, by enumerating
/// all subsets of the tree's split features. At most 12 distinct features.
std::vector<double> brute_shapley(const RegressionTree& tree, std::span<const double> x);

}  // namespace vigil
