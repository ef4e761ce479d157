#include "flk/wavelet.hpp"

namespace flk {

Tensor haar_dwt_packed(const Tensor& x) {
  require_hwc(x, "haar_dwt");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (h % 2 != 0 || w % 2 != 0) {
    throw ShapeError("haar_dwt: spatial size " + to_string(x.shape()) + " must be even");
  }
  Tensor out({h / 2, w / 2, 4 * c});
  for (std::size_t y = 0; y < h / 2; ++y)
    for (std::size_t xx = 0; xx < w / 2; ++xx)
      for (std::size_t k = 0; k < c; ++k) {
        const double a = x.at(2 * y, 2 * xx, k), b = x.at(2 * y, 2 * xx + 1, k);
        const double cc = x.at(2 * y + 1, 2 * xx, k), d = x.at(2 * y + 1, 2 * xx + 1, k);
        out.at(y, xx, k) = 0.5 * (a + b + cc + d);
        out.at(y, xx, c + k) = 0.5 * (a + b - cc - d);
        out.at(y, xx, 2 * c + k) = 0.5 * (a - b + cc - d);
        out.at(y, xx, 3 * c + k) = 0.5 * (a - b - cc + d);
      }
  return out;
}

Tensor haar_idwt_packed(const Tensor& packed) {
  require_hwc(packed, "haar_idwt");
  if (packed.dim(2) % 4 != 0) throw ShapeError("haar_idwt: packed channel count must be a multiple of 4");
  const std::size_t h = packed.dim(0), w = packed.dim(1), c = packed.dim(2) / 4;
  Tensor out({2 * h, 2 * w, c});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx)
      for (std::size_t k = 0; k < c; ++k) {
        const double ll = packed.at(y, xx, k), lh = packed.at(y, xx, c + k);
        const double hl = packed.at(y, xx, 2 * c + k), hh = packed.at(y, xx, 3 * c + k);
        out.at(2 * y, 2 * xx, k) = 0.5 * (ll + lh + hl + hh);
        out.at(2 * y, 2 * xx + 1, k) = 0.5 * (ll + lh - hl - hh);
        out.at(2 * y + 1, 2 * xx, k) = 0.5 * (ll - lh + hl - hh);
        out.at(2 * y + 1, 2 * xx + 1, k) = 0.5 * (ll - lh - hl + hh);
      }
  return out;
}

namespace {

std::vector<double> channel_energy(const Tensor& band) {
  const std::size_t c = band.dim(2);
  std::vector<double> e(c, 0.0);
  for (std::size_t i = 0; i < band.size(); ++i) e[i % c] += band[i] * band[i];
  return e;
}

}  // namespace

DirectionalEnergy directional_energy(const WaveletSubbands& s) {
  return {channel_energy(s.ll), channel_energy(s.lh), channel_energy(s.hl), channel_energy(s.hh)};
}

}  // namespace flk
