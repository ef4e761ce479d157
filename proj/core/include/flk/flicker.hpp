#pragma once

#include <array>
#include <cstdint>
#include <numbers>

#include "flk/tensor.hpp"

namespace flk {

enum class StripeOrientation { kHorizontal, kVertical };

/// AC lighting seen through a rolling shutter. The lamp emits
/// |sin(2 pi f_ac t)|^gamma_w, so its flicker frequency is 2 f_ac.
struct FlickerParams {
  double ac_frequency = 50.0;         // Hz
  double gamma_w = 1.0;               // waveform sharpening exponent
  double exposure_time = 2e-3;        // s
  double row_readout_time = 100e-6;   // s per row
  std::array<double, 3> phase_offsets{0.0, 2.0 * std::numbers::pi / 3.0, 4.0 * std::numbers::pi / 3.0};
  StripeOrientation orientation = StripeOrientation::kHorizontal;
  double min_gain = 0.0;
  double noise_sigma = 0.0;  // additive Gaussian read noise, off by default

  double flicker_frequency() const noexcept { return 2.0 * ac_frequency; }
  double flicker_period() const noexcept { return 1.0 / flicker_frequency(); }
  /// Stripe period in rows: 1 / (2 f_ac t_row).
  double stripe_period_rows() const noexcept { return 1.0 / (flicker_frequency() * row_readout_time); }
  void validate() const;
};

double ac_waveform(double t, const FlickerParams& fp);
/// Mean of the waveform over one flicker period (2/pi when gamma_w = 1).
double waveform_period_mean(const FlickerParams& fp);

/// Exposure-averaged illumination of row r relative to the period mean,
/// clamped to [min_gain, 1].
double row_attenuation(std::size_t row, double phase, const FlickerParams& fp);
/// Gains for rows 0 .. n-1 as a length-n tensor.
Tensor gain_vector(std::size_t n, double phase, const FlickerParams& fp);

struct BurstTriplet {
  Tensor i0, i1, i2;
  Tensor gt;
  std::array<Tensor, 3> gains;  // along rows (horizontal) or columns (vertical)

  const Tensor& frame(std::size_t t) const;
};

/// Three flickered frames of a static clean image with values in [0, 1].
BurstTriplet synth_burst(const Tensor& clean, const FlickerParams& fp, std::uint64_t seed);

/// Deterministic test scene in [0.05, 0.95]: colour ramps with a few
/// rectangles and discs.
Tensor synthetic_scene(std::size_t height, std::size_t width, std::uint64_t seed);

/// Mean of each row, averaged over columns and channels.
Tensor row_profile(const Tensor& image);

/// Pearson correlation of two equally sized sequences; 0 when either is constant.
double pearson(const Tensor& a, const Tensor& b);

/// Dominant period (in samples) of a 1-D profile, from the first autocorrelation
/// peak after the first zero crossing of the mean-removed profile. Returns 0
/// when no periodicity is found.
double estimate_period(const Tensor& profile);

}  // namespace flk
