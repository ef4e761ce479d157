#include "flk/flicker.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "flk/random.hpp"
#include "flk/spectral.hpp"

namespace flk {

namespace {

constexpr double kQuadTol = 1e-13;
constexpr unsigned kQuadDepth = 20;

double integrate(const FlickerParams& fp, double a, double b) {
  if (b <= a) return 0.0;
  // Mapped onto [0, 1]: on sub-millisecond intervals the error estimate otherwise
  // never reaches tolerance and the recursion runs to full depth.
  const double len = b - a;
  auto f = [&](double u) { return ac_waveform(a + len * u, fp); };
  return len * boost::math::quadrature::gauss_kronrod<double, 21>::integrate(f, 0.0, 1.0, kQuadDepth, kQuadTol);
}

// The waveform has kinks at multiples of the flicker period; integrate piecewise between them.
double integrate_piecewise(const FlickerParams& fp, double a, double b) {
  const double period = fp.flicker_period();
  double total = 0.0;
  double lo = a;
  double boundary = (std::floor(a / period) + 1.0) * period;
  while (boundary < b) {
    total += integrate(fp, lo, boundary);
    lo = boundary;
    boundary += period;
  }
  return total + integrate(fp, lo, b);
}

}  // namespace

void FlickerParams::validate() const {
  if (!(ac_frequency > 0.0)) throw Error("flicker: ac_frequency must be positive");
  if (!(gamma_w > 0.0)) throw Error("flicker: gamma_w must be positive");
  if (!(exposure_time > 0.0)) throw Error("flicker: exposure_time must be positive");
  if (!(row_readout_time > 0.0)) throw Error("flicker: row_readout_time must be positive");
  if (!(min_gain >= 0.0 && min_gain < 1.0)) throw Error("flicker: min_gain must lie in [0, 1)");
  if (!(noise_sigma >= 0.0)) throw Error("flicker: noise_sigma must be non-negative");
  for (const double phi : phase_offsets) {
    if (!(phi >= 0.0 && phi < 2.0 * std::numbers::pi)) throw Error("flicker: phase offsets must lie in [0, 2 pi)");
  }
}

double ac_waveform(double t, const FlickerParams& fp) {
  return std::pow(std::abs(std::sin(2.0 * std::numbers::pi * fp.ac_frequency * t)), fp.gamma_w);
}

double waveform_period_mean(const FlickerParams& fp) {
  return integrate(fp, 0.0, fp.flicker_period()) / fp.flicker_period();
}

double row_attenuation(std::size_t row, double phase, const FlickerParams& fp) {
  const double start =
      phase / (2.0 * std::numbers::pi) * fp.flicker_period() + static_cast<double>(row) * fp.row_readout_time;
  const double mean = integrate_piecewise(fp, start, start + fp.exposure_time) / fp.exposure_time;
  return std::clamp(mean / waveform_period_mean(fp), fp.min_gain, 1.0);
}

Tensor gain_vector(std::size_t n, double phase, const FlickerParams& fp) {
  fp.validate();
  Tensor g(Shape{n});
  for (std::size_t r = 0; r < n; ++r) g[r] = row_attenuation(r, phase, fp);
  return g;
}

const Tensor& BurstTriplet::frame(std::size_t t) const {
  switch (t) {
    case 0: return i0;
    case 1: return i1;
    case 2: return i2;
    default: throw Error("burst frame index " + std::to_string(t) + " out of range");
  }
}

namespace {

Tensor apply_row_gains(const Tensor& clean, const Tensor& gains) {
  const std::size_t h = clean.shape()[0], w = clean.shape()[1], c = clean.shape()[2];
  Tensor out(clean.shape());
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) out.at(y, x, k) = std::clamp(clean.at(y, x, k) * gains[y], 0.0, 1.0);
    }
  }
  return out;
}

}  // namespace

BurstTriplet synth_burst(const Tensor& clean, const FlickerParams& fp, std::uint64_t seed) {
  require_hwc(clean, "synth_burst");
  fp.validate();
  for (const double v : clean.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw NumericError("synth_burst: clean image values must lie in [0, 1]");
  }

  const bool vertical = fp.orientation == StripeOrientation::kVertical;
  const Tensor base = vertical ? transpose_hw(clean) : clean;
  const std::size_t rows = base.shape()[0];

  BurstTriplet burst;
  burst.gt = clean;
  std::array<Tensor, 3> frames;
  Rng rng(seed);
  for (std::size_t t = 0; t < 3; ++t) {
    burst.gains[t] = gain_vector(rows, fp.phase_offsets[t], fp);
    Tensor frame = apply_row_gains(base, burst.gains[t]);
    if (vertical) frame = transpose_hw(frame);
    if (fp.noise_sigma > 0.0) {
      for (auto& v : frame.data()) v = std::clamp(v + fp.noise_sigma * rng.normal(), 0.0, 1.0);
    }
    frames[t] = std::move(frame);
  }
  burst.i0 = std::move(frames[0]);
  burst.i1 = std::move(frames[1]);
  burst.i2 = std::move(frames[2]);
  return burst;
}

Tensor row_profile(const Tensor& image) {
  require_hwc(image, "row_profile");
  const std::size_t h = image.shape()[0], w = image.shape()[1], c = image.shape()[2];
  Tensor p(Shape{h});
  for (std::size_t y = 0; y < h; ++y) {
    double s = 0.0;
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t k = 0; k < c; ++k) s += image.at(y, x, k);
    }
    p[y] = s / static_cast<double>(w * c);
  }
  return p;
}

double estimate_period(const Tensor& profile) {
  const std::size_t n = profile.size();
  if (n < 4) return 0.0;
  double mean = 0.0;
  for (const double v : profile.data()) mean += v;
  mean /= static_cast<double>(n);

  // Zero-padding to 2n turns the circular autocorrelation into the linear one.
  Tensor padded(Shape{2 * n, 1, 1});
  for (std::size_t i = 0; i < n; ++i) padded[i] = profile[i] - mean;
  const Tensor acf = autocorrelation(padded);
  if (!(acf[0] > 0.0)) return 0.0;

  const std::size_t max_lag = n - n / 4;
  std::vector<double> r(max_lag + 1);
  for (std::size_t lag = 0; lag <= max_lag; ++lag) r[lag] = acf[lag] / static_cast<double>(n - lag);

  std::size_t lag = 1;
  while (lag < max_lag && r[lag] > 0.0) ++lag;
  if (lag >= max_lag) return 0.0;
  std::size_t best = lag;
  for (std::size_t k = lag; k < max_lag; ++k) {
    if (r[k] > r[best]) best = k;
    if (r[k] > 0.0 && r[k] >= r[k - 1] && r[k] >= r[k + 1]) {
      best = k;
      break;
    }
  }
  if (best == 0 || best >= max_lag || r[best] <= 0.0) return 0.0;
  const double a = r[best - 1], b = r[best], c = r[best + 1];
  const double denom = a - 2.0 * b + c;
  const double offset = denom < 0.0 ? 0.5 * (a - c) / denom : 0.0;
  return static_cast<double>(best) + offset;
}

Tensor synthetic_scene(std::size_t height, std::size_t width, std::uint64_t seed) {
  if (height == 0 || width == 0) throw ShapeError("synthetic_scene: empty size");
  Rng rng(seed);
  std::array<double, 3> base{}, ramp_y{}, ramp_x{};
  for (std::size_t c = 0; c < 3; ++c) {
    base[c] = rng.uniform(0.3, 0.6);
    ramp_y[c] = rng.uniform(-0.25, 0.25);
    ramp_x[c] = rng.uniform(-0.25, 0.25);
  }
  Tensor img({height, width, 3});
  const double hy = static_cast<double>(height), wx = static_cast<double>(width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(y, x, c) = base[c] + ramp_y[c] * (static_cast<double>(y) / hy - 0.5) +
                          ramp_x[c] * (static_cast<double>(x) / wx - 0.5);

  for (int shape = 0; shape < 6; ++shape) {
    const double cy = rng.uniform(0.0, hy), cx = rng.uniform(0.0, wx);
    const double ry = rng.uniform(0.08, 0.25) * hy, rx = rng.uniform(0.08, 0.25) * wx;
    const bool disc = shape % 2 == 1;
    std::array<double, 3> colour{};
    for (auto& v : colour) v = rng.uniform(0.1, 0.9);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) {
        const double dy = (static_cast<double>(y) - cy) / ry, dx = (static_cast<double>(x) - cx) / rx;
        const bool inside = disc ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
        if (!inside) continue;
        for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = colour[c];
      }
  }
  for (auto& v : img.data()) v = std::clamp(v, 0.05, 0.95);
  return img;
}

double pearson(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size() || a.size() == 0) throw ShapeError("pearson: sequences must be non-empty and equally long");
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace flk
