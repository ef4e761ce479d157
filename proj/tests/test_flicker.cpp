#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>

#include <gtest/gtest.h>

#include "flk/flicker.hpp"
#include "flk/spectral.hpp"
#include "test_util.hpp"

namespace flk {
namespace {

using test::random_tensor;

// Composite Simpson on a fine grid, independent of the library quadrature.
double simpson(const std::function<double(double)>& f, double a, double b, std::size_t n = 20000) {
  const double h = (b - a) / static_cast<double>(n);
  double s = f(a) + f(b);
  for (std::size_t i = 1; i < n; ++i) s += f(a + h * static_cast<double>(i)) * (i % 2 ? 4.0 : 2.0);
  return s * h / 3.0;
}

TEST(Waveform, ZerosPeaksAndMean) {
  const FlickerParams fp;
  EXPECT_NEAR(ac_waveform(0.0, fp), 0.0, 1e-15);
  EXPECT_NEAR(ac_waveform(0.01, fp), 0.0, 1e-12);
  for (double g : {1.0, 2.0, 0.5}) {
    FlickerParams p = fp;
    p.gamma_w = g;
    EXPECT_NEAR(ac_waveform(0.005, p), 1.0, 1e-12);
  }
  EXPECT_NEAR(waveform_period_mean(fp), 2.0 / std::numbers::pi, 1e-6);
  FlickerParams sharp = fp;
  sharp.gamma_w = 3.0;
  const double oracle =
      simpson([&](double t) { return ac_waveform(t, sharp); }, 0.0, sharp.flicker_period()) / sharp.flicker_period();
  EXPECT_NEAR(waveform_period_mean(sharp), oracle, 1e-6);
}

TEST(Attenuation, MatchesSimpsonOracle) {
  FlickerParams fp;
  fp.exposure_time = 3.3e-3;
  for (std::size_t row : {0u, 17u, 63u})
    for (double phi : {0.0, 1.0, 4.0}) {
      const double start = phi / (2.0 * std::numbers::pi) * fp.flicker_period() + row * fp.row_readout_time;
      const double mean =
          simpson([&](double t) { return ac_waveform(t, fp); }, start, start + fp.exposure_time) / fp.exposure_time;
      EXPECT_NEAR(row_attenuation(row, phi, fp), std::min(1.0, mean / (2.0 / std::numbers::pi)), 1e-6);
    }
}

TEST(Attenuation, FullPeriodExposureHasNoStripes) {
  for (double f : {50.0, 60.0}) {
    FlickerParams fp;
    fp.ac_frequency = f;
    fp.exposure_time = fp.flicker_period();
    for (double phi : fp.phase_offsets) {
      const Tensor g = gain_vector(240, phi, fp);
      const auto [lo, hi] = std::minmax_element(g.data().begin(), g.data().end());
      EXPECT_LT(*hi - *lo, 1e-6);
      EXPECT_NEAR(*hi, 1.0, 1e-6);
    }
  }
}

TEST(Attenuation, ShortExposureFollowsWaveform) {
  FlickerParams fp;
  fp.exposure_time = 1e-7;
  for (std::size_t row : {3u, 40u, 71u}) {
    const double t = row * fp.row_readout_time;
    const double expected = std::min(1.0, ac_waveform(t, fp) / (2.0 / std::numbers::pi));
    EXPECT_NEAR(row_attenuation(row, 0.0, fp), expected, 1e-4);
  }
}

TEST(Attenuation, MinGainFloor) {
  FlickerParams fp;
  fp.exposure_time = 1e-4;
  fp.min_gain = 0.2;
  const Tensor g = gain_vector(200, 0.0, fp);
  for (double v : g.data()) {
    EXPECT_GE(v, 0.2);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_DOUBLE_EQ(g[0], 0.2);
}

std::size_t dominant_period(const Tensor& g) {
  // Largest non-DC bin of the gain spectrum, as rows per cycle.
  const std::size_t n = g.size();
  Tensor col({n, 1, 1});
  double mean = 0.0;
  for (double v : g.data()) mean += v / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) col[i] = g[i] - mean;
  const ComplexTensor spec = fft2(col);
  std::size_t best = 1;
  for (std::size_t k = 1; k <= n / 2; ++k)
    if (std::abs(spec[k]) > std::abs(spec[best])) best = k;
  return n / best;
}

TEST(Stripes, PeriodMatchesPrediction) {
  struct Case {
    double f, t_row;
  };
  for (const Case c : {Case{50.0, 100e-6}, Case{60.0, 50e-6}, Case{50.0, 25e-6}}) {
    FlickerParams fp;
    fp.ac_frequency = c.f;
    fp.row_readout_time = c.t_row;
    const double predicted = 1.0 / (2.0 * c.f * c.t_row);
    EXPECT_DOUBLE_EQ(fp.stripe_period_rows(), predicted);
    const auto rows = static_cast<std::size_t>(std::lround(predicted * 6));
    const Tensor g = gain_vector(rows, 0.0, fp);
    EXPECT_NEAR(static_cast<double>(dominant_period(g)), predicted, 1.0);
    EXPECT_NEAR(estimate_period(g), predicted, 1.0);
    // Periodic in r.
    const auto p = static_cast<std::size_t>(std::lround(predicted));
    for (std::size_t r = 0; r + p < rows; r += 7) EXPECT_NEAR(g[r], g[r + p], 0.05);
  }
}

TEST(Burst, FramesAreRowScaledClean) {
  FlickerParams fp;
  fp.row_readout_time = 200e-6;
  const Tensor clean = synthetic_scene(48, 40, 3);
  const BurstTriplet b = synth_burst(clean, fp, 1);
  EXPECT_EQ(b.gt, clean);
  for (std::size_t t = 0; t < 3; ++t) {
    const Tensor& f = b.frame(t);
    for (std::size_t y = 0; y < 48; ++y)
      for (std::size_t x = 0; x < 40; ++x)
        for (std::size_t c = 0; c < 3; ++c) {
          EXPECT_DOUBLE_EQ(f.at(y, x, c), std::clamp(clean.at(y, x, c) * b.gains[t][y], 0.0, 1.0));
          EXPECT_LE(f.at(y, x, c), clean.at(y, x, c));
        }
  }
  EXPECT_GT(max_abs_diff(b.gains[0], b.gains[1]), 1e-3);
  EXPECT_GT(max_abs_diff(b.gains[1], b.gains[2]), 1e-3);
  EXPECT_GT(max_abs_diff(b.gains[0], b.gains[2]), 1e-3);
}

TEST(Burst, ThreePhasesCoverEveryRow) {
  FlickerParams fp;
  fp.exposure_time = 1e-4;
  const BurstTriplet b = synth_burst(Tensor({200, 4, 3}, 0.5), fp, 0);
  // Phases spread by a third of a cycle keep at least one frame bright.
  for (std::size_t r = 0; r < 200; ++r) {
    const double best = std::max({b.gains[0][r], b.gains[1][r], b.gains[2][r]});
    EXPECT_GE(best, 0.75) << r;
  }
}

TEST(Burst, FullPeriodFramesEqualClean) {
  FlickerParams fp;
  fp.exposure_time = fp.flicker_period();
  const Tensor clean = synthetic_scene(16, 16, 4);
  const BurstTriplet b = synth_burst(clean, fp, 2);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_LT(max_abs_diff(b.frame(t), clean), 1e-6);
}

TEST(Burst, VerticalIsTransposedHorizontal) {
  FlickerParams h;
  h.row_readout_time = 300e-6;
  FlickerParams v = h;
  v.orientation = StripeOrientation::kVertical;
  const Tensor clean = synthetic_scene(24, 36, 5);
  const BurstTriplet bv = synth_burst(clean, v, 3);
  const BurstTriplet bh = synth_burst(transpose_hw(clean), h, 3);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_EQ(bv.frame(t), transpose_hw(bh.frame(t)));
}

TEST(Burst, NoiseIsSeeded) {
  FlickerParams fp;
  fp.noise_sigma = 0.01;
  const Tensor clean = synthetic_scene(16, 16, 6);
  EXPECT_EQ(synth_burst(clean, fp, 7).i0, synth_burst(clean, fp, 7).i0);
  EXPECT_NE(synth_burst(clean, fp, 7).i0, synth_burst(clean, fp, 8).i0);
}

TEST(Burst, ResidualProfilePeaksAtStripePeriod) {
  FlickerParams fp;
  fp.row_readout_time = 250e-6;  // 40-row stripes
  const BurstTriplet b = synth_burst(synthetic_scene(160, 32, 7), fp, 0);
  const Tensor profile = row_profile(b.i0 - b.gt);
  Tensor col({160, 1, 1});
  double mean = 0.0;
  for (double v : profile.data()) mean += v / 160.0;
  for (std::size_t i = 0; i < 160; ++i) col[i] = profile[i] - mean;
  const Tensor r = autocorrelation(col);
  std::size_t best = 20;
  for (std::size_t lag = 20; lag <= 80; ++lag)
    if (r[lag] > r[best]) best = lag;
  EXPECT_NEAR(static_cast<double>(best), 40.0, 1.0);
}

TEST(Burst, RejectsOutOfRange) {
  const FlickerParams fp;
  EXPECT_THROW(synth_burst(Tensor({4, 4, 3}, 1.5), fp, 0), NumericError);
  FlickerParams bad = fp;
  bad.exposure_time = 0.0;
  EXPECT_ANY_THROW(bad.validate());
  bad = fp;
  bad.phase_offsets[1] = 7.0;
  EXPECT_ANY_THROW(bad.validate());
}

TEST(Profiles, RowMeanAndPearson) {
  const Tensor img = random_tensor({5, 4, 3}, 8, 0.0, 1.0);
  const Tensor p = row_profile(img);
  for (std::size_t y = 0; y < 5; ++y) {
    double s = 0.0;
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t c = 0; c < 3; ++c) s += img.at(y, x, c);
    EXPECT_NEAR(p[y], s / 12.0, 1e-15);
  }
  const Tensor a({4}, std::vector<double>{1, 2, 3, 4});
  EXPECT_NEAR(pearson(a, scale(a, 2.0)), 1.0, 1e-15);
  EXPECT_NEAR(pearson(a, scale(a, -1.0)), -1.0, 1e-15);
  EXPECT_EQ(pearson(a, Tensor({4}, 3.0)), 0.0);
}

TEST(Scene, RangeAndDeterminism) {
  const Tensor s = synthetic_scene(32, 48, 1);
  for (double v : s.data()) {
    EXPECT_GE(v, 0.05);
    EXPECT_LE(v, 0.95);
  }
  EXPECT_EQ(s, synthetic_scene(32, 48, 1));
  EXPECT_NE(s, synthetic_scene(32, 48, 2));
}

TEST(PhaseSwap, ExchangesStripePatterns) {
  FlickerParams fp;
  fp.row_readout_time = 400e-6;
  const BurstTriplet b = synth_burst(synthetic_scene(64, 64, 9), fp, 0);
  const auto [a_swapped, b_swapped] = phase_swap(b.i0, b.i2);
  const Tensor pa = row_profile(b.i0), pb = row_profile(b.i2), ps = row_profile(a_swapped);
  EXPECT_GT(pearson(ps, pb), pearson(ps, pa));
}

}  // namespace
}  // namespace flk
