#pragma once

// Framewise speech descriptors used as candidate pseudo-labels, and their
// utterance-level aggregates.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ci_select/corpus.hpp"
#include "ci_select/dsp.hpp"
#include "ci_select/error.hpp"

namespace ci_select {

enum class PseudoLabel { kLoudness, kF0, kVoicing, kAlphaRatio, kZcr, kRastaL1, kLogHnr };

inline constexpr std::array<PseudoLabel, 7> kAllPseudoLabels = {
    PseudoLabel::kLoudness, PseudoLabel::kF0,     PseudoLabel::kVoicing, PseudoLabel::kAlphaRatio,
    PseudoLabel::kZcr,      PseudoLabel::kRastaL1, PseudoLabel::kLogHnr,
};

inline std::string_view to_string(PseudoLabel p) {
  switch (p) {
    case PseudoLabel::kLoudness: return "loudness";
    case PseudoLabel::kF0: return "f0";
    case PseudoLabel::kVoicing: return "voicing";
    case PseudoLabel::kAlphaRatio: return "alpha_ratio";
    case PseudoLabel::kZcr: return "zcr";
    case PseudoLabel::kRastaL1: return "rasta_l1";
    case PseudoLabel::kLogHnr: return "log_hnr";
  }
  return "?";
}

inline std::optional<PseudoLabel> parse_pseudo_label(std::string_view name) {
  for (PseudoLabel p : kAllPseudoLabels) {
    if (to_string(p) == name) return p;
  }
  return std::nullopt;
}

inline std::string pseudo_label_names() {
  std::string out;
  for (PseudoLabel p : kAllPseudoLabels) {
    if (!out.empty()) out += ", ";
    out += to_string(p);
  }
  return out;
}

struct PseudoLabelConfig {
  double f0_min = 60.0;
  double f0_max = 400.0;
  double voicing_threshold = 0.5;
  double alpha_low_hz = 50.0;
  double alpha_split_hz = 1000.0;
  double alpha_clamp_db = 60.0;
  double hnr_min_db = -20.0;
  double hnr_max_db = 40.0;
  std::size_t rasta_transient = 4;
};

struct PseudoLabelSeries {
  PseudoLabel name = PseudoLabel::kLoudness;
  std::vector<double> framewise;
  double utterance_value = 0.0;
};

// Mean of the framewise values under the per-descriptor masking rules:
// f0 averages voiced (non-zero) frames only and is 0 when none are voiced;
// rasta_l1 skips the filter warm-up frames.
inline double aggregate_utterance(const PseudoLabelSeries& series,
                                  std::size_t rasta_transient = PseudoLabelConfig{}.rasta_transient) {
  const auto& v = series.framewise;
  if (v.empty()) throw DataError("cannot aggregate an empty " + std::string(to_string(series.name)) + " series");

  if (series.name == PseudoLabel::kF0) {
    double sum = 0.0;
    std::size_t n = 0;
    for (double x : v) {
      if (x > 0.0) {
        sum += x;
        ++n;
      }
    }
    return n == 0 ? 0.0 : sum / static_cast<double>(n);
  }

  std::size_t first = 0;
  if (series.name == PseudoLabel::kRastaL1) {
    if (v.size() <= rasta_transient) {
      throw DataError("rasta_l1 needs more than " + std::to_string(rasta_transient) + " frames, got " +
                      std::to_string(v.size()));
    }
    first = rasta_transient;
  }
  double sum = 0.0;
  for (std::size_t i = first; i < v.size(); ++i) sum += v[i];
  return sum / static_cast<double>(v.size() - first);
}

namespace detail {

inline PseudoLabelSeries finish(PseudoLabel name, std::vector<double> framewise,
                                std::size_t rasta_transient = PseudoLabelConfig{}.rasta_transient) {
  PseudoLabelSeries s{name, std::move(framewise), 0.0};
  s.utterance_value = aggregate_utterance(s, rasta_transient);
  return s;
}

inline FrameLayout checked_layout(const AudioBuffer& buf, const FrontEndConfig& fe) {
  const auto layout = FrameLayout::make(buf.sample_rate, fe.frame_ms, fe.hop_ms);
  if (layout.count(buf.samples.size()) == 0) {
    throw DataError("buffer of " + std::to_string(buf.samples.size()) +
                    " samples is shorter than one frame (" + std::to_string(layout.frame_len) + ")");
  }
  return layout;
}

// Lag range in samples for the pitch search inside one frame.
struct LagRange {
  std::size_t min_lag = 0;
  std::size_t max_lag = 0;
  std::size_t window = 0;  // integration length, frame_len - max_lag
};

inline LagRange lag_range(const FrameLayout& layout, const PseudoLabelConfig& cfg) {
  if (!(cfg.f0_min > 0.0) || !(cfg.f0_max > cfg.f0_min)) {
    throw UsageError("pitch range must satisfy 0 < f0_min < f0_max");
  }
  LagRange r;
  r.min_lag = static_cast<std::size_t>(std::floor(layout.sample_rate / cfg.f0_max));
  if (r.min_lag < 4) {
    throw UsageError("sample rate too low: the f0_max period must span at least 4 samples");
  }
  r.max_lag = static_cast<std::size_t>(std::ceil(layout.sample_rate / cfg.f0_min));
  if (r.max_lag + r.min_lag > layout.frame_len) r.max_lag = layout.frame_len - r.min_lag;
  if (r.max_lag <= r.min_lag) throw UsageError("frame too short for the configured pitch range");
  r.window = layout.frame_len - r.max_lag;
  return r;
}

// Offset of the vertex of the parabola through (-1, a), (0, b), (1, c).
inline double parabolic_offset(double a, double b, double c) {
  const double denom = a - 2.0 * b + c;
  if (denom == 0.0) return 0.0;
  return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

struct PitchEstimate {
  double f0_hz = 0.0;
  double periodicity = 0.0;  // 1 - cumulative-mean-normalized difference at the chosen lag
};

// YIN-style estimate on one frame.
inline PitchEstimate yin_frame(const double* x, const LagRange& lags, int sample_rate,
                               double threshold) {
  const std::size_t w = lags.window;
  std::vector<double> cmnd(lags.max_lag + 1, 1.0);
  double running = 0.0;
  for (std::size_t tau = 1; tau <= lags.max_lag; ++tau) {
    double d = 0.0;
    for (std::size_t j = 0; j < w; ++j) {
      const double diff = x[j] - x[j + tau];
      d += diff * diff;
    }
    running += d;
    cmnd[tau] = running > 0.0 ? d * static_cast<double>(tau) / running : 1.0;
  }

  // First dip below the absolute threshold, followed down to its local minimum;
  // otherwise the global minimum over the search range.
  const double dip = 1.0 - threshold;
  std::size_t best = lags.min_lag;
  bool found = false;
  for (std::size_t tau = lags.min_lag; tau <= lags.max_lag; ++tau) {
    if (cmnd[tau] < dip) {
      while (tau + 1 <= lags.max_lag && cmnd[tau + 1] < cmnd[tau]) ++tau;
      best = tau;
      found = true;
      break;
    }
  }
  if (!found) {
    for (std::size_t tau = lags.min_lag; tau <= lags.max_lag; ++tau) {
      if (cmnd[tau] < cmnd[best]) best = tau;
    }
  }

  PitchEstimate est;
  est.periodicity = std::clamp(1.0 - cmnd[best], 0.0, 1.0);
  double lag = static_cast<double>(best);
  if (best > 1 && best < lags.max_lag) {
    lag += parabolic_offset(cmnd[best - 1], cmnd[best], cmnd[best + 1]);
  }
  est.f0_hz = sample_rate / lag;
  return est;
}

// Peak normalized autocorrelation over the pitch lag range, refined by a
// parabolic fit around the best integer lag.
inline double max_normalized_autocorr(const double* x, const LagRange& lags) {
  const std::size_t w = lags.window;
  std::vector<double> r(lags.max_lag + 1, 0.0);
  double e0 = 0.0;
  for (std::size_t j = 0; j < w; ++j) e0 += x[j] * x[j];
  for (std::size_t tau = lags.min_lag - 1; tau <= lags.max_lag; ++tau) {
    double num = 0.0, e1 = 0.0;
    for (std::size_t j = 0; j < w; ++j) {
      num += x[j] * x[j + tau];
      e1 += x[j + tau] * x[j + tau];
    }
    const double denom = std::sqrt(e0 * e1);
    r[tau] = denom > 0.0 ? num / denom : 0.0;
  }
  std::size_t best = lags.min_lag;
  for (std::size_t tau = lags.min_lag; tau <= lags.max_lag; ++tau) {
    if (r[tau] > r[best]) best = tau;
  }
  double peak = r[best];
  if (peak > 0.0 && best < lags.max_lag) {
    const double a = r[best - 1], b = r[best], c = r[best + 1];
    const double delta = parabolic_offset(a, b, c);
    peak = std::max(peak, b - 0.25 * (a - c) * delta);
  }
  return peak;
}

}  // namespace detail

// Sign changes per sample in each frame; zero counts as positive.
inline PseudoLabelSeries extract_zcr(const AudioBuffer& buf, const FrontEndConfig& fe = {}) {
  const auto layout = detail::checked_layout(buf, fe);
  const std::size_t n_frames = layout.count(buf.samples.size());
  std::vector<double> out(n_frames);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const double* x = buf.samples.data() + t * layout.hop;
    std::size_t crossings = 0;
    for (std::size_t i = 1; i < layout.frame_len; ++i) {
      if ((x[i] >= 0.0) != (x[i - 1] >= 0.0)) ++crossings;
    }
    out[t] = static_cast<double>(crossings) / static_cast<double>(layout.frame_len);
  }
  return detail::finish(PseudoLabel::kZcr, std::move(out));
}

// Pitch and voicing from the same per-frame analysis. Unvoiced frames carry
// f0 = 0; voicing is 1 iff the periodicity reaches the threshold.
inline std::pair<PseudoLabelSeries, PseudoLabelSeries> extract_f0_and_voicing(
    const AudioBuffer& buf, const PseudoLabelConfig& cfg = {}, const FrontEndConfig& fe = {}) {
  const auto layout = detail::checked_layout(buf, fe);
  const auto lags = detail::lag_range(layout, cfg);
  const std::size_t n_frames = layout.count(buf.samples.size());
  std::vector<double> f0(n_frames), voiced(n_frames);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const auto est = detail::yin_frame(buf.samples.data() + t * layout.hop, lags, buf.sample_rate,
                                       cfg.voicing_threshold);
    const bool is_voiced = est.periodicity >= cfg.voicing_threshold && est.periodicity > 0.0;
    voiced[t] = is_voiced ? 1.0 : 0.0;
    f0[t] = is_voiced ? est.f0_hz : 0.0;
  }
  return {detail::finish(PseudoLabel::kF0, std::move(f0)),
          detail::finish(PseudoLabel::kVoicing, std::move(voiced))};
}

// Sum over bands of (linear mel power)^0.3, inverting the log floor.
inline PseudoLabelSeries extract_loudness(const FeatureSequence& mel) {
  if (mel.length() == 0) throw DataError("empty mel sequence");
  const double log_floor = std::log(kLogFloor);
  std::vector<double> out(static_cast<std::size_t>(mel.length()));
  for (Eigen::Index t = 0; t < mel.length(); ++t) {
    double sum = 0.0;
    for (Eigen::Index b = 0; b < mel.dim(); ++b) {
      // exp(v) - floor, written so a floored cell maps to exactly 0.
      const double linear = std::max(kLogFloor * std::expm1(mel.frames(t, b) - log_floor), 0.0);
      sum += std::pow(linear, 0.3);
    }
    out[static_cast<std::size_t>(t)] = sum;
  }
  return detail::finish(PseudoLabel::kLoudness, std::move(out));
}

// 10*log10(P_above / P_below) around the split frequency, clamped.
inline PseudoLabelSeries extract_alpha_ratio(const SpectralFrameSet& spec,
                                             const PseudoLabelConfig& cfg = {}) {
  if (spec.power.rows() == 0) throw DataError("empty spectrum");
  const double nyquist = spec.sample_rate / 2.0;
  if (!(cfg.alpha_low_hz < cfg.alpha_split_hz) || !(cfg.alpha_split_hz < nyquist)) {
    throw UsageError("alpha ratio bands must satisfy alpha_low_hz < alpha_split_hz < Nyquist");
  }
  std::vector<double> out(static_cast<std::size_t>(spec.power.rows()));
  for (Eigen::Index t = 0; t < spec.power.rows(); ++t) {
    double below = 0.0, above = 0.0;
    for (Eigen::Index k = 0; k < spec.power.cols(); ++k) {
      const double f = spec.bin_freq(k);
      if (f >= cfg.alpha_low_hz && f <= cfg.alpha_split_hz) {
        below += spec.power(t, k);
      } else if (f > cfg.alpha_split_hz && f <= nyquist) {
        above += spec.power(t, k);
      }
    }
    below = std::max(below, kLogFloor);
    above = std::max(above, kLogFloor);
    out[static_cast<std::size_t>(t)] =
        std::clamp(10.0 * std::log10(above / below), -cfg.alpha_clamp_db, cfg.alpha_clamp_db);
  }
  return detail::finish(PseudoLabel::kAlphaRatio, std::move(out));
}

// RASTA band-pass of one trajectory, zero initial state:
// y[t] = 0.98 y[t-1] + 0.1 (2x[t] + x[t-1] - x[t-3] - 2x[t-4]).
inline std::vector<double> rasta_filter(const std::vector<double>& x) {
  std::vector<double> y(x.size());
  auto at = [&](std::ptrdiff_t i) { return i < 0 ? 0.0 : x[static_cast<std::size_t>(i)]; };
  double prev = 0.0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const auto i = static_cast<std::ptrdiff_t>(t);
    prev = 0.98 * prev + 0.1 * (2.0 * at(i) + at(i - 1) - at(i - 3) - 2.0 * at(i - 4));
    y[t] = prev;
  }
  return y;
}

// L1 norm across bands of the RASTA-filtered log-mel trajectories.
inline PseudoLabelSeries extract_rasta_l1(const FeatureSequence& mel, const PseudoLabelConfig& cfg = {}) {
  const auto n = static_cast<std::size_t>(mel.length());
  if (n <= cfg.rasta_transient) {
    throw DataError("rasta_l1 needs more than " + std::to_string(cfg.rasta_transient) +
                    " frames, got " + std::to_string(n));
  }
  std::vector<double> out(n, 0.0);
  std::vector<double> band(n);
  for (Eigen::Index b = 0; b < mel.dim(); ++b) {
    for (std::size_t t = 0; t < n; ++t) band[t] = mel.frames(static_cast<Eigen::Index>(t), b);
    const auto filtered = rasta_filter(band);
    for (std::size_t t = 0; t < n; ++t) out[t] += std::abs(filtered[t]);
  }
  return detail::finish(PseudoLabel::kRastaL1, std::move(out), cfg.rasta_transient);
}

// Harmonicity-to-noise ratio in dB from the peak normalized autocorrelation r:
// 10*log10(r / (1 - r)), clamped; r <= 0 maps to the lower clamp.
inline double hnr_db(double r, double min_db = -20.0, double max_db = 40.0) {
  if (!(r > 0.0)) return min_db;
  if (r >= 1.0) return max_db;
  return std::clamp(10.0 * std::log10(r / (1.0 - r)), min_db, max_db);
}

inline PseudoLabelSeries extract_log_hnr(const AudioBuffer& buf, const PseudoLabelConfig& cfg = {},
                                         const FrontEndConfig& fe = {}) {
  const auto layout = detail::checked_layout(buf, fe);
  const auto lags = detail::lag_range(layout, cfg);
  const std::size_t n_frames = layout.count(buf.samples.size());
  std::vector<double> out(n_frames);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const double r = detail::max_normalized_autocorr(buf.samples.data() + t * layout.hop, lags);
    out[t] = hnr_db(r, cfg.hnr_min_db, cfg.hnr_max_db);
  }
  return detail::finish(PseudoLabel::kLogHnr, std::move(out));
}

// Log-mel features plus all seven descriptors for one utterance.
struct UtteranceAnalysis {
  FeatureSequence mel;
  std::array<PseudoLabelSeries, kAllPseudoLabels.size()> labels;

  const PseudoLabelSeries& operator[](PseudoLabel p) const {
    return labels[static_cast<std::size_t>(p)];
  }
};

inline UtteranceAnalysis analyze_utterance(const AudioBuffer& buf, const FrontEndConfig& fe = {},
                                           const PseudoLabelConfig& cfg = {}) {
  const auto spec = stft_power(buf, fe);
  UtteranceAnalysis out;
  out.mel = mel_spectrogram(spec, fe);
  auto [f0, voicing] = extract_f0_and_voicing(buf, cfg, fe);
  out.labels[static_cast<std::size_t>(PseudoLabel::kLoudness)] = extract_loudness(out.mel);
  out.labels[static_cast<std::size_t>(PseudoLabel::kF0)] = std::move(f0);
  out.labels[static_cast<std::size_t>(PseudoLabel::kVoicing)] = std::move(voicing);
  out.labels[static_cast<std::size_t>(PseudoLabel::kAlphaRatio)] = extract_alpha_ratio(spec, cfg);
  out.labels[static_cast<std::size_t>(PseudoLabel::kZcr)] = extract_zcr(buf, fe);
  out.labels[static_cast<std::size_t>(PseudoLabel::kRastaL1)] = extract_rasta_l1(out.mel, cfg);
  out.labels[static_cast<std::size_t>(PseudoLabel::kLogHnr)] = extract_log_hnr(buf, cfg, fe);
  return out;
}

}  // namespace ci_select
