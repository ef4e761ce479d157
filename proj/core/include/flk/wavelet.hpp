#pragma once

#include <vector>

#include "flk/tensor.hpp"

namespace flk {

/// One level of an orthonormal Haar decomposition. Each band is H/2 x W/2 x C.
/// LH is the vertical high-pass: horizontal stripes land there.
template <class T>
struct Subbands {
  T ll, lh, hl, hh;
};

using WaveletSubbands = Subbands<Tensor>;

/// Packed layout used internally: H/2 x W/2 x 4C with channel blocks LL, LH, HL, HH.
Tensor haar_dwt_packed(const Tensor& x);
Tensor haar_idwt_packed(const Tensor& packed);

/// Per 2x2 block [[a, b], [c, d]]:
///   LL = (a+b+c+d)/2, LH = (a+b-c-d)/2, HL = (a-b+c-d)/2, HH = (a-b-c+d)/2.
template <class T>
Subbands<T> haar_dwt(const T& x) {
  const auto c = x.shape()[2];
  const T packed = haar_dwt_packed(x);
  return {slice_channels(packed, 0, c), slice_channels(packed, c, c), slice_channels(packed, 2 * c, c),
          slice_channels(packed, 3 * c, c)};
}

template <class T>
T haar_idwt(const Subbands<T>& s) {
  if (s.ll.shape() != s.lh.shape() || s.ll.shape() != s.hl.shape() || s.ll.shape() != s.hh.shape()) {
    throw ShapeError("haar_idwt: subband shapes differ");
  }
  return haar_idwt_packed(concat_channels(std::vector<T>{s.ll, s.lh, s.hl, s.hh}));
}

struct DirectionalEnergy {
  std::vector<double> ll, lh, hl, hh;  // sum of squares per channel
};

DirectionalEnergy directional_energy(const WaveletSubbands& s);

}  // namespace flk
