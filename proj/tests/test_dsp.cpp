#include <gtest/gtest.h>

#include <random>

#include "ci_select/dsp.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace ci_select {
namespace {

TEST(Stft, OneSecondGives98Frames) {
  const auto spec = stft_power(testing::sine(440.0, 1.0));
  EXPECT_EQ(spec.power.rows(), 98);  // floor((16000 - 400) / 160) + 1
  EXPECT_EQ(spec.power.cols(), 257);
  EXPECT_DOUBLE_EQ(spec.bin_hz, 31.25);
  EXPECT_DOUBLE_EQ(spec.frame_hop_s, 0.01);
  EXPECT_DOUBLE_EQ(spec.frame_len_s, 0.025);
}

TEST(Stft, FrameCountFormulaProperty) {
  std::mt19937 rng(3);
  std::uniform_int_distribution<std::size_t> len(400, 20000);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t s = len(rng);
    AudioBuffer buf;
    buf.sample_rate = 16000;
    buf.samples.assign(s, 0.1);
    const auto expected = static_cast<Eigen::Index>((s - 400) / 160 + 1);
    EXPECT_EQ(stft_power(buf).power.rows(), expected) << "S=" << s;
  }
}

TEST(Stft, SilenceGivesZeroPower) {
  AudioBuffer buf;
  buf.sample_rate = 16000;
  buf.samples.assign(4000, 0.0);
  EXPECT_EQ(stft_power(buf).power.maxCoeff(), 0.0);
}

TEST(Stft, MatchesDirectDft) {
  const auto buf = testing::white_noise(0.1, 9);
  const auto spec = stft_power(buf);
  for (Eigen::Index t : {0, 3, 7}) {
    std::vector<double> frame(buf.samples.begin() + t * 160, buf.samples.begin() + t * 160 + 400);
    const auto ref = oracle::dft_power(frame, 512);
    for (std::size_t k = 0; k < ref.size(); ++k) {
      EXPECT_NEAR(spec.power(t, static_cast<Eigen::Index>(k)), ref[k], 1e-9 * (1.0 + ref[k]));
    }
  }
}

TEST(Stft, OneKilohertzPeaksAtBin32) {
  const auto spec = stft_power(testing::sine(1000.0, 1.0));
  for (Eigen::Index t = 0; t < spec.power.rows(); ++t) {
    Eigen::Index arg;
    spec.power.row(t).maxCoeff(&arg);
    EXPECT_EQ(arg, 32) << "frame " << t;
  }
}

TEST(Stft, SinePeakWithinOneBinProperty) {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> freq(200.0, 7500.0);
  for (int trial = 0; trial < 25; ++trial) {
    const double f = freq(rng);
    const auto spec = stft_power(testing::sine(f, 0.2, 16000, 0.8, 0.3 * trial));
    for (Eigen::Index t = 0; t < spec.power.rows(); ++t) {
      Eigen::Index arg;
      spec.power.row(t).maxCoeff(&arg);
      EXPECT_LE(std::abs(static_cast<double>(arg) - f / 31.25), 1.0) << f;
    }
  }
}

TEST(Stft, Errors) {
  AudioBuffer shortbuf;
  shortbuf.sample_rate = 16000;
  shortbuf.samples.assign(399, 0.0);
  EXPECT_THROW(stft_power(shortbuf), DataError);
  FrontEndConfig cfg;
  cfg.fft_size = 256;
  EXPECT_THROW(stft_power(testing::sine(100, 0.1), cfg), UsageError);
}

TEST(Stft, PowerScalesWithSquaredGain) {
  const auto base = testing::white_noise(0.2, 4, 16000, 0.2);
  const auto a = stft_power(base);
  const auto b = stft_power(testing::scaled(base, 3.0));
  EXPECT_LT((b.power - 9.0 * a.power).cwiseAbs().maxCoeff(), 1e-9 * a.power.maxCoeff());
}

TEST(MelFilterbank, RowsNonNegativeUnitSumOverlapping) {
  const auto fb = mel_filterbank(80, 512, 16000, 0.0, 8000.0);
  ASSERT_EQ(fb.rows(), 80);
  ASSERT_EQ(fb.cols(), 257);
  EXPECT_GE(fb.minCoeff(), 0.0);
  for (Eigen::Index m = 0; m < fb.rows(); ++m) {
    EXPECT_NEAR(fb.row(m).sum(), 1.0, 1e-12);
    // Filters narrower than a bin at the low end can fall on disjoint bins.
    const auto wide = [&](Eigen::Index r) { return (fb.row(r).array() > 0.0).count() >= 3; };
    if (m + 1 < fb.rows() && wide(m) && wide(m + 1)) {
      EXPECT_GT(fb.row(m).cwiseProduct(fb.row(m + 1)).sum(), 0.0) << "filters " << m << "," << m + 1;
    }
  }
}

TEST(MelFilterbank, DegenerateFilterNamesIndex) {
  try {
    mel_filterbank(200, 512, 16000, 0.0, 8000.0);
    FAIL();
  } catch (const UsageError& e) {
    EXPECT_NE(std::string(e.what()).find("mel filter "), std::string::npos);
  }
  EXPECT_THROW(mel_filterbank(0, 512, 16000, 0.0, 8000.0), UsageError);
  EXPECT_THROW(mel_filterbank(40, 512, 16000, 500.0, 400.0), UsageError);
  EXPECT_THROW(mel_filterbank(40, 512, 16000, 0.0, 9000.0), UsageError);
}

SpectralFrameSet empty_spec(Eigen::Index frames) {
  SpectralFrameSet s;
  s.power = Eigen::MatrixXd::Zero(frames, 257);
  s.sample_rate = 16000;
  s.fft_size = 512;
  s.bin_hz = 31.25;
  s.frame_hop_s = 0.01;
  s.frame_len_s = 0.025;
  s.source_id = "utt";
  return s;
}

TEST(MelSpectrogram, ZeroPowerIsFloor) {
  const auto mel = mel_spectrogram(empty_spec(5));
  ASSERT_EQ(mel.frames.rows(), 5);
  ASSERT_EQ(mel.frames.cols(), 80);
  EXPECT_EQ(mel.frames.maxCoeff(), std::log(1e-10));
  EXPECT_EQ(mel.frames.minCoeff(), std::log(1e-10));
  EXPECT_EQ(mel.frame_hop_s, 0.01);
  EXPECT_EQ(mel.frame_len_s, 0.025);
  EXPECT_EQ(mel.source_id, "utt");
}

TEST(MelSpectrogram, ImpulseAtOneKilohertzHitsStraddlingBands) {
  auto spec = empty_spec(1);
  spec.power(0, 32) = 1.0;  // 32 * 31.25 = 1000 Hz
  const auto mel = mel_spectrogram(spec);

  // Filter m spans edges m..m+2 of 82 mel-spaced points over [0, 8000] Hz.
  const double top = oracle::mel(8000.0);
  std::vector<int> expected;
  for (int m = 0; m < 80; ++m) {
    const double left = oracle::inv_mel(top * m / 81.0);
    const double right = oracle::inv_mel(top * (m + 2) / 81.0);
    if (1000.0 > left && 1000.0 < right) expected.push_back(m);
  }
  ASSERT_GE(expected.size(), 1u);
  ASSERT_LE(expected.size(), 2u);
  for (int m = 0; m < 80; ++m) {
    const bool hit = std::find(expected.begin(), expected.end(), m) != expected.end();
    if (hit) {
      EXPECT_GT(mel.frames(0, m), std::log(1e-10) + 1.0) << m;
    } else {
      EXPECT_EQ(mel.frames(0, m), std::log(1e-10)) << m;
    }
  }
}

TEST(MelSpectrogram, LogScalingLaw) {
  const auto base = testing::sine(300.0, 0.5, 16000, 0.4);
  auto noisy = testing::white_noise(0.5, 8, 16000, 0.3);
  for (std::size_t i = 0; i < noisy.samples.size(); ++i) noisy.samples[i] += base.samples[i];

  const auto ref_spec = stft_power(noisy);
  const auto ref = mel_spectrogram(ref_spec);
  for (double g : {0.5, 2.0, 10.0}) {
    const auto out = mel_spectrogram(stft_power(testing::scaled(noisy, g)));
    const double shift = 2.0 * std::log(g);
    std::size_t checked = 0;
    for (Eigen::Index i = 0; i < ref.frames.size(); ++i) {
      // Floor error is bounded by 1e-10 * |1 - g^2| / (g^2 * P); skip cells where that exceeds 1e-10.
      const double p = std::exp(ref.frames.data()[i]);
      if (1e-10 * std::abs(1.0 - g * g) / (g * g * p) > 1e-10) continue;
      EXPECT_NEAR(out.frames.data()[i] - ref.frames.data()[i], shift, 1e-9);
      ++checked;
    }
    EXPECT_GT(checked, static_cast<std::size_t>(ref.frames.size() / 2));
  }
}

TEST(MelSpectrogram, PreemphasisChangesTilt) {
  FrontEndConfig cfg;
  cfg.preemphasis = true;
  const auto buf = testing::white_noise(0.3, 2);
  const auto plain = mel_spectrogram(stft_power(buf));
  const auto emph = mel_spectrogram(stft_power(buf, cfg), cfg);
  // Pre-emphasis attenuates low bands relative to high bands.
  const double low_drop = (plain.frames.col(2) - emph.frames.col(2)).mean();
  const double high_drop = (plain.frames.col(75) - emph.frames.col(75)).mean();
  EXPECT_GT(low_drop, high_drop + 1.0);
}

}  // namespace
}  // namespace ci_select
