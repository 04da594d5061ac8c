#pragma once

// Short-time power spectrum and log-Mel front end.

#include <fftw3.h>

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

#include "ci_select/corpus.hpp"
#include "ci_select/error.hpp"

namespace ci_select {

inline constexpr double kLogFloor = 1e-10;

struct FrontEndConfig {
  double frame_ms = 25.0;
  double hop_ms = 10.0;
  int n_mels = 80;
  int fft_size = 0;  // 0: next power of two >= frame length
  double fmin = 0.0;
  double fmax = 0.0;  // 0: Nyquist
  bool preemphasis = false;
  double preemphasis_coef = 0.97;
};

// Frame geometry in samples for a given sample rate.
struct FrameLayout {
  std::size_t frame_len = 0;
  std::size_t hop = 0;
  int sample_rate = 0;

  static FrameLayout make(int sample_rate, double frame_ms, double hop_ms) {
    FrameLayout f;
    f.sample_rate = sample_rate;
    f.frame_len = static_cast<std::size_t>(std::lround(frame_ms * sample_rate / 1000.0));
    f.hop = static_cast<std::size_t>(std::lround(hop_ms * sample_rate / 1000.0));
    if (f.frame_len == 0 || f.hop == 0) {
      throw UsageError("frame and hop must each span at least one sample");
    }
    return f;
  }

  // floor((S - frame_len) / hop) + 1, or 0 when S < frame_len.
  std::size_t count(std::size_t n_samples) const {
    if (n_samples < frame_len) return 0;
    return (n_samples - frame_len) / hop + 1;
  }

  double frame_len_s() const { return static_cast<double>(frame_len) / sample_rate; }
  double hop_s() const { return static_cast<double>(hop) / sample_rate; }
};

inline std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

struct SpectralFrameSet {
  Eigen::MatrixXd power;  // L x (fft_size/2 + 1)
  double bin_hz = 0.0;
  int sample_rate = 0;
  int fft_size = 0;
  double frame_hop_s = 0.0;
  double frame_len_s = 0.0;
  std::string source_id;

  double bin_freq(Eigen::Index k) const { return static_cast<double>(k) * bin_hz; }
};

// Periodic Hann window of length n.
inline std::vector<double> hann_periodic(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  }
  return w;
}

namespace detail {

// Planner calls into FFTW are not thread-safe; execution on distinct plans is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex mu;
  return mu;
}

class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    in_ = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    if (!in_ || !out_) {
      release();
      throw std::bad_alloc();
    }
    std::lock_guard lock(fftw_planner_mutex());
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;
  ~RealFft() { release(); }

  double* input() { return in_; }
  const fftw_complex* output() const { return out_; }
  std::size_t bins() const { return n_ / 2 + 1; }
  void execute() { fftw_execute(plan_); }

 private:
  void release() {
    std::lock_guard lock(fftw_planner_mutex());
    if (plan_) fftw_destroy_plan(plan_);
    if (in_) fftw_free(in_);
    if (out_) fftw_free(out_);
    plan_ = nullptr;
    in_ = nullptr;
    out_ = nullptr;
  }

  std::size_t n_;
  double* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace detail

inline std::vector<double> apply_preemphasis(const std::vector<double>& x, double coef) {
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - (i > 0 ? coef * x[i - 1] : 0.0);
  return y;
}

// Squared magnitude of the Hann-windowed real FFT of every frame.
inline SpectralFrameSet stft_power(const AudioBuffer& buf, const FrontEndConfig& cfg = {}) {
  const auto layout = FrameLayout::make(buf.sample_rate, cfg.frame_ms, cfg.hop_ms);
  const std::size_t n_frames = layout.count(buf.samples.size());
  if (n_frames == 0) {
    throw DataError("buffer of " + std::to_string(buf.samples.size()) +
                    " samples is shorter than one frame (" + std::to_string(layout.frame_len) + ")");
  }
  const std::size_t n_fft =
      cfg.fft_size > 0 ? static_cast<std::size_t>(cfg.fft_size) : next_pow2(layout.frame_len);
  if (n_fft < layout.frame_len) {
    throw UsageError("fft_size " + std::to_string(n_fft) + " is smaller than the frame length " +
                     std::to_string(layout.frame_len));
  }

  const std::vector<double> signal =
      cfg.preemphasis ? apply_preemphasis(buf.samples, cfg.preemphasis_coef) : buf.samples;
  const auto window = hann_periodic(layout.frame_len);

  detail::RealFft fft(n_fft);
  SpectralFrameSet out;
  out.power.resize(static_cast<Eigen::Index>(n_frames), static_cast<Eigen::Index>(fft.bins()));
  out.sample_rate = buf.sample_rate;
  out.fft_size = static_cast<int>(n_fft);
  out.bin_hz = static_cast<double>(buf.sample_rate) / static_cast<double>(n_fft);
  out.frame_hop_s = layout.hop_s();
  out.frame_len_s = layout.frame_len_s();

  double* in = fft.input();
  for (std::size_t t = 0; t < n_frames; ++t) {
    const double* frame = signal.data() + t * layout.hop;
    for (std::size_t i = 0; i < layout.frame_len; ++i) in[i] = frame[i] * window[i];
    for (std::size_t i = layout.frame_len; i < n_fft; ++i) in[i] = 0.0;
    fft.execute();
    const fftw_complex* spec = fft.output();
    for (std::size_t k = 0; k < fft.bins(); ++k) {
      out.power(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(k)) =
          spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
    }
  }
  return out;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular HTK-scale filterbank, n_mels x (fft_size/2 + 1). Each row is
// normalized to unit sum.
inline Eigen::MatrixXd mel_filterbank(int n_mels, int fft_size, int sample_rate, double fmin,
                                      double fmax) {
  const double nyquist = sample_rate / 2.0;
  if (n_mels < 1) throw UsageError("n_mels must be >= 1");
  if (!(fmin >= 0.0) || !(fmin < fmax) || fmax > nyquist) {
    throw UsageError("mel range must satisfy 0 <= fmin < fmax <= Nyquist (" +
                     std::to_string(nyquist) + " Hz)");
  }
  const Eigen::Index n_bins = fft_size / 2 + 1;
  const double bin_hz = static_cast<double>(sample_rate) / fft_size;

  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);
  std::vector<double> edges(static_cast<std::size_t>(n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) / (n_mels + 1));
  }

  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(n_mels, n_bins);
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    for (Eigen::Index k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * bin_hz;
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      fb(m, k) = w;
    }
    const double total = fb.row(m).sum();
    if (!(total > 0.0)) {
      throw UsageError("mel filter " + std::to_string(m) + " covers no FFT bin (" +
                       std::to_string(left) + "-" + std::to_string(right) +
                       " Hz); reduce n_mels or raise fft_size");
    }
    fb.row(m) /= total;
  }
  return fb;
}

// log(filterbank * power + 1e-10), L x n_mels.
inline FeatureSequence mel_spectrogram(const SpectralFrameSet& spec, const FrontEndConfig& cfg = {}) {
  const double fmax = cfg.fmax > 0.0 ? cfg.fmax : spec.sample_rate / 2.0;
  const Eigen::MatrixXd fb = mel_filterbank(cfg.n_mels, spec.fft_size, spec.sample_rate, cfg.fmin, fmax);
  FeatureSequence out;
  out.frames = (spec.power * fb.transpose()).unaryExpr([](double x) { return std::log(x + kLogFloor); });
  out.frame_hop_s = spec.frame_hop_s;
  out.frame_len_s = spec.frame_len_s;
  out.source_id = spec.source_id;
  return out;
}

}  // namespace ci_select
