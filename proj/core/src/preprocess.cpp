#include "vigil/preprocess.hpp"

#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "vigil/error.hpp"
#include "vigil/parallel.hpp"

namespace vigil {

namespace {

// FFTW's planner is not re-entrant; execution on distinct buffers is.
std::mutex g_planner_mutex;

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};
template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwBuffer<T> fftw_buffer(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
  if (!p) throw std::bad_alloc();
  return FftwBuffer<T>(p);
}

std::size_t fast_fft_size(std::size_t n) {
  for (std::size_t m = n;; ++m) {
    std::size_t r = m;
    for (std::size_t f : {2u, 3u, 5u}) {
      while (r % f == 0) r /= f;
    }
    if (r == 1) return m;
  }
}

std::vector<double> hamming_lowpass(double cutoff_hz, int order, double rate) {
  const double fc = cutoff_hz / rate;
  const int mid = order / 2;
  std::vector<double> h(static_cast<std::size_t>(order) + 1);
  for (int k = 0; k <= mid; ++k) {
    const double m = static_cast<double>(k - mid);
    const double sinc = m == 0.0 ? 2.0 * fc : std::sin(2.0 * std::numbers::pi * fc * m) / (std::numbers::pi * m);
    const double w = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * k / order);
    h[static_cast<std::size_t>(k)] = w * sinc;
    h[static_cast<std::size_t>(order - k)] = w * sinc;
  }
  double dc = 0.0;
  for (int k = 0; k < mid; ++k) dc += 2.0 * h[static_cast<std::size_t>(k)];
  dc += h[static_cast<std::size_t>(mid)];
  for (auto& v : h) v /= dc;
  return h;
}

}  // namespace

Recording common_average_reference(const Recording& rec) {
  const std::size_t nc = rec.n_channels();
  const std::size_t ns = rec.n_samples();
  if (nc < 2) throw ValidationError("common average reference needs at least two channels");
  std::vector<double> mean(ns, 0.0);
  for (std::size_t c = 0; c < nc; ++c) {
    const auto ch = rec.channel(c);
    for (std::size_t t = 0; t < ns; ++t) mean[t] += ch[t];
  }
  for (auto& m : mean) m /= static_cast<double>(nc);
  std::vector<double> out(nc * ns);
  for (std::size_t c = 0; c < nc; ++c) {
    const auto ch = rec.channel(c);
    double* dst = out.data() + c * ns;
    for (std::size_t t = 0; t < ns; ++t) dst[t] = ch[t] - mean[t];
  }
  return Recording(rec.participant_id(), rec.channel_labels(), rec.sample_rate_hz(), std::move(out));
}

std::vector<double> design_bandpass(double low_hz, double high_hz, int order, double rate) {
  if (order < 2 || order % 2 != 0) throw ValidationError("FIR order must be a positive even integer");
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < rate / 2.0)) {
    throw ValidationError("band-pass edges must satisfy 0 < low < high < rate/2");
  }
  const auto hi = hamming_lowpass(high_hz, order, rate);
  const auto lo = hamming_lowpass(low_hz, order, rate);
  std::vector<double> h(hi.size());
  const std::size_t n = h.size();
  for (std::size_t k = 0; k <= n / 2; ++k) {
    h[k] = hi[k] - lo[k];
    h[n - 1 - k] = h[k];
  }
  return h;
}

double kernel_gain(std::span<const double> kernel, double freq_hz, double rate) {
  const double mid = static_cast<double>(kernel.size() - 1) / 2.0;
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t k = 0; k < kernel.size(); ++k) {
    const double phase = -2.0 * std::numbers::pi * freq_hz / rate * (static_cast<double>(k) - mid);
    acc += kernel[k] * std::polar(1.0, phase);
  }
  return std::abs(acc);
}

namespace {

// Convolves each of `inputs` with one kernel through a shared FFT plan.
class FftConvolver {
 public:
  FftConvolver(std::span<const double> kernel, std::size_t signal_len)
      : kernel_len_(kernel.size()),
        nfft_(fast_fft_size(signal_len + kernel.size() - 1)),
        nspec_(nfft_ / 2 + 1),
        kernel_spec_(fftw_buffer<fftw_complex>(nspec_)) {
    auto time = fftw_buffer<double>(nfft_);
    auto spec = fftw_buffer<fftw_complex>(nspec_);
    {
      std::lock_guard lock(g_planner_mutex);
      forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(nfft_), time.get(), spec.get(), FFTW_ESTIMATE);
      inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(nfft_), spec.get(), time.get(), FFTW_ESTIMATE);
    }
    std::fill(time.get(), time.get() + nfft_, 0.0);
    std::copy(kernel.begin(), kernel.end(), time.get());
    fftw_execute_dft_r2c(forward_, time.get(), kernel_spec_.get());
  }
  ~FftConvolver() {
    std::lock_guard lock(g_planner_mutex);
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }
  FftConvolver(const FftConvolver&) = delete;
  FftConvolver& operator=(const FftConvolver&) = delete;

  void run(std::span<const double> x, std::span<double> out) const {
    auto time = fftw_buffer<double>(nfft_);
    auto spec = fftw_buffer<fftw_complex>(nspec_);
    std::fill(time.get(), time.get() + nfft_, 0.0);
    std::copy(x.begin(), x.end(), time.get());
    fftw_execute_dft_r2c(forward_, time.get(), spec.get());
    for (std::size_t i = 0; i < nspec_; ++i) {
      const double re = spec[i][0] * kernel_spec_[i][0] - spec[i][1] * kernel_spec_[i][1];
      const double im = spec[i][0] * kernel_spec_[i][1] + spec[i][1] * kernel_spec_[i][0];
      spec[i][0] = re;
      spec[i][1] = im;
    }
    fftw_execute_dft_c2r(inverse_, spec.get(), time.get());
    const std::size_t delay = (kernel_len_ - 1) / 2;
    const double scale = 1.0 / static_cast<double>(nfft_);
    for (std::size_t n = 0; n < out.size(); ++n) out[n] = time[n + delay] * scale;
  }

 private:
  std::size_t kernel_len_;
  std::size_t nfft_;
  std::size_t nspec_;
  FftwBuffer<fftw_complex> kernel_spec_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

}  // namespace

std::vector<double> apply_zero_phase_fir(std::span<const double> x, std::span<const double> kernel) {
  if (kernel.empty() || kernel.size() % 2 == 0) throw ValidationError("kernel length must be odd");
  std::vector<double> out(x.size());
  if (x.empty()) return out;
  FftConvolver conv(kernel, x.size());
  conv.run(x, out);
  return out;
}

Recording bandpass_fir(const Recording& rec, double low_hz, double high_hz, int order) {
  const auto kernel = design_bandpass(low_hz, high_hz, order, rec.sample_rate_hz());
  const std::size_t ns = rec.n_samples();
  std::vector<double> out(rec.n_channels() * ns);
  FftConvolver conv(kernel, ns);
  parallel_for(rec.n_channels(), [&](std::size_t c) {
    conv.run(rec.channel(c), std::span<double>(out.data() + c * ns, ns));
  });
  return Recording(rec.participant_id(), rec.channel_labels(), rec.sample_rate_hz(), std::move(out));
}

Recording downsample(const Recording& rec, int factor) {
  if (factor < 1) throw ValidationError("downsample factor must be >= 1");
  const auto f = static_cast<std::size_t>(factor);
  const std::size_t ns = rec.n_samples();
  const std::size_t kept = (ns + f - 1) / f;
  std::vector<double> out(rec.n_channels() * kept);
  for (std::size_t c = 0; c < rec.n_channels(); ++c) {
    const auto ch = rec.channel(c);
    for (std::size_t i = 0; i < kept; ++i) out[c * kept + i] = ch[i * f];
  }
  return Recording(rec.participant_id(), rec.channel_labels(), rec.sample_rate_hz() / factor, std::move(out));
}

Recording preprocess(const Recording& rec, const PreprocessConfig& cfg) {
  Recording filtered = bandpass_fir(rec, cfg.low_hz, cfg.high_hz, cfg.order);
  Recording reduced = cfg.downsample_factor == 1 ? std::move(filtered) : downsample(filtered, cfg.downsample_factor);
  return cfg.common_average ? common_average_reference(reduced) : reduced;
}

}  // namespace vigil
