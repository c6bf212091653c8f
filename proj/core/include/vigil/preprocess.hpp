#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "vigil/recording.hpp"

namespace vigil {

/// Subtracts the across-channel mean at every sample. Needs >= 2 channels.
Recording common_average_reference(const Recording& rec);

/// Hamming-windowed sinc band-pass kernel of length order + 1, built as the
/// difference of two unit-DC-gain low-pass kernels. Exactly symmetric.
std::vector<double> design_bandpass(double low_hz, double high_hz, int order, double sample_rate_hz);

/// Frequency response magnitude of `kernel` at `freq_hz` (delay removed).
double kernel_gain(std::span<const double> kernel, double freq_hz, double sample_rate_hz);

/// Samples at each edge that the zero-padded filter leaves in transient.
inline std::size_t fir_transient_samples(int order) { return static_cast<std::size_t>(order / 2); }

/// Linear-phase convolution with group-delay compensation: output sample n
/// is sum_k h[k] x[n + order/2 - k], with zeros outside the signal. Same
/// length as the input and zero net phase.
std::vector<double> apply_zero_phase_fir(std::span<const double> x, std::span<const double> kernel);

/// Band-pass every channel. Requires 0 < low < high < rate/2 and even order.
Recording bandpass_fir(const Recording& rec, double low_hz, double high_hz, int order);

/// Keeps samples 0, factor, 2*factor, ...; rate becomes rate/factor.
Recording downsample(const Recording& rec, int factor);

struct PreprocessConfig {
  double low_hz = 0.1;
  double high_hz = 47.0;
  int order = 3300;
  int downsample_factor = 1;
  bool common_average = true;
};

/// filter -> downsample -> common average reference.
Recording preprocess(const Recording& rec, const PreprocessConfig& cfg);

}  // namespace vigil
