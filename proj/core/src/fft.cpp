#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <shared_mutex>

#include "flk/spectral.hpp"

namespace flk {

namespace {

constexpr std::size_t kMaxRadix = 13;

std::vector<std::size_t> factorize(std::size_t n) {
  std::vector<std::size_t> f;
  while (n % 4 == 0) {
    f.push_back(4);
    n /= 4;
  }
  for (std::size_t p = 2; p * p <= n; ++p) {
    while (n % p == 0) {
      f.push_back(p);
      n /= p;
    }
  }
  if (n > 1) f.push_back(n);
  return f;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t m = 1;
  while (m < n) m <<= 1;
  return m;
}

}  // namespace

FftPlan::FftPlan(std::size_t n) : n_(n) {
  if (n == 0) throw ShapeError("fft plan: length must be positive");
  factors_ = factorize(n);
  const bool smooth = std::all_of(factors_.begin(), factors_.end(), [](std::size_t p) { return p <= kMaxRadix; });
  if (smooth) {
    twiddles_.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      twiddles_[j] = {std::cos(angle), std::sin(angle)};
    }
    return;
  }

  factors_.clear();
  const std::size_t m = next_pow2(2 * n - 1);
  inner_ = std::make_unique<FftPlan>(m);
  chirp_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small for large k.
    const std::size_t k2 = (k * k) % (2 * n);
    const double angle = -std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n);
    chirp_[k] = {std::cos(angle), std::sin(angle)};
  }
  kernel_fft_.assign(m, Complex{});
  kernel_fft_[0] = std::conj(chirp_[0]);
  for (std::size_t k = 1; k < n; ++k) {
    kernel_fft_[k] = std::conj(chirp_[k]);
    kernel_fft_[m - k] = std::conj(chirp_[k]);
  }
  inner_->forward(kernel_fft_);
}

FftPlan::~FftPlan() = default;

void FftPlan::forward(std::span<Complex> data) const {
  if (data.size() != n_) throw ShapeError("fft: buffer length does not match plan");
  transform_batch(data.data(), 1, false);
}

void FftPlan::inverse(std::span<Complex> data) const {
  if (data.size() != n_) throw ShapeError("fft: buffer length does not match plan");
  transform_batch(data.data(), 1, true);
}

namespace {

// Plain complex product; std::complex operator* also handles inf/nan cases
// through a slow library call.
inline Complex cmul(Complex a, Complex b) {
  return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

inline Complex twiddle(const std::vector<Complex>& table, std::size_t idx, bool inverse) {
  const Complex w = table[idx];
  return inverse ? Complex{w.real(), -w.imag()} : w;
}

}  // namespace

void FftPlan::transform_batch(Complex* data, std::size_t batch, bool inverse) const {
  if (n_ == 1 || batch == 0) return;
  if (inner_) {
    // inverse DFT = conj(forward DFT(conj(x)))
    std::vector<Complex> lane(n_);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t j = 0; j < n_; ++j) lane[j] = inverse ? std::conj(data[j * batch + b]) : data[j * batch + b];
      bluestein(lane);
      for (std::size_t j = 0; j < n_; ++j) data[j * batch + b] = inverse ? std::conj(lane[j]) : lane[j];
    }
    return;
  }
  thread_local std::vector<Complex> scratch;
  scratch.assign(data, data + n_ * batch);
  radix(scratch.data(), 1, data, n_, 0, batch, inverse);
}

void FftPlan::radix(const Complex* in, std::size_t stride, Complex* out, std::size_t n, std::size_t level,
                    std::size_t batch, bool inverse) const {
  const std::size_t bs = batch;
  if (n == 1) {
    std::copy(in, in + bs, out);
    return;
  }
  const std::size_t p = factors_[level];
  const std::size_t m = n / p;
  for (std::size_t r = 0; r < p; ++r)
    radix(in + r * stride * bs, stride * p, out + r * m * bs, m, level + 1, batch, inverse);

  // Twiddle W_n^j lives at index j * (N / n) of the full-length table.
  const std::size_t step = n_ / n;

  if (p == 2) {
    for (std::size_t k = 0; k < m; ++k) {
      const Complex w1 = twiddle(twiddles_, k * step, inverse);
      Complex* o0 = out + k * bs;
      Complex* o1 = out + (m + k) * bs;
      for (std::size_t b = 0; b < bs; ++b) {
        const Complex a = o0[b];
        const Complex t = cmul(o1[b], w1);
        o0[b] = a + t;
        o1[b] = a - t;
      }
    }
    return;
  }

  if (p == 4) {
    // Multiplication by -i (forward) or +i (inverse).
    auto rot = [inverse](Complex z) { return inverse ? Complex{-z.imag(), z.real()} : Complex{z.imag(), -z.real()}; };
    for (std::size_t k = 0; k < m; ++k) {
      const Complex w1 = twiddle(twiddles_, k * step, inverse);
      const Complex w2 = twiddle(twiddles_, 2 * k * step, inverse);
      const Complex w3 = twiddle(twiddles_, 3 * k * step, inverse);
      Complex* o0 = out + k * bs;
      Complex* o1 = out + (m + k) * bs;
      Complex* o2 = out + (2 * m + k) * bs;
      Complex* o3 = out + (3 * m + k) * bs;
      for (std::size_t b = 0; b < bs; ++b) {
        const Complex a0 = o0[b];
        const Complex a1 = cmul(o1[b], w1);
        const Complex a2 = cmul(o2[b], w2);
        const Complex a3 = cmul(o3[b], w3);
        const Complex s02 = a0 + a2, d02 = a0 - a2;
        const Complex s13 = a1 + a3, d13 = rot(a1 - a3);
        o0[b] = s02 + s13;
        o1[b] = d02 + d13;
        o2[b] = s02 - s13;
        o3[b] = d02 - d13;
      }
    }
    return;
  }

  // Generic odd prime: r * k * step < n_, so no reduction is needed.
  const std::size_t p_step = n_ / p;
  std::array<Complex, kMaxRadix * kMaxRadix> dft{};
  for (std::size_t q = 0; q < p; ++q)
    for (std::size_t r = 0; r < p; ++r) dft[q * p + r] = twiddle(twiddles_, ((r * q) % p) * p_step, inverse);
  std::array<Complex, kMaxRadix> tw{};
  std::array<Complex, kMaxRadix> tmp{};
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t r = 0; r < p; ++r) tw[r] = twiddle(twiddles_, r * k * step, inverse);
    for (std::size_t b = 0; b < bs; ++b) {
      tmp[0] = out[k * bs + b];
      for (std::size_t r = 1; r < p; ++r) tmp[r] = cmul(out[(r * m + k) * bs + b], tw[r]);
      for (std::size_t q = 0; q < p; ++q) {
        Complex acc = tmp[0];
        for (std::size_t r = 1; r < p; ++r) acc += cmul(tmp[r], dft[q * p + r]);
        out[(q * m + k) * bs + b] = acc;
      }
    }
  }
}

void FftPlan::bluestein(std::span<Complex> data) const {
  const std::size_t m = inner_->size();
  std::vector<Complex> a(m);
  for (std::size_t k = 0; k < n_; ++k) a[k] = cmul(data[k], chirp_[k]);
  inner_->forward(a);
  for (std::size_t k = 0; k < m; ++k) a[k] = cmul(a[k], kernel_fft_[k]);
  inner_->inverse(a);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n_; ++k) data[k] = cmul(a[k] * inv_m, chirp_[k]);
}

std::shared_ptr<const FftPlan> fft_plan(std::size_t n) {
  static std::shared_mutex mutex;
  static std::map<std::size_t, std::shared_ptr<const FftPlan>> cache;
  {
    std::shared_lock lock(mutex);
    if (auto it = cache.find(n); it != cache.end()) return it->second;
  }
  auto plan = std::make_shared<const FftPlan>(n);
  std::unique_lock lock(mutex);
  auto [it, inserted] = cache.emplace(n, std::move(plan));
  return it->second;
}

namespace {

void transform2d(ComplexTensor& x, bool inverse) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Complex* d = x.data().data();
  // Rows: each row is w interleaved channel sequences. Columns: the whole
  // tensor is h interleaved sequences of length w * c.
  auto row_plan = fft_plan(w);
  for (std::size_t y = 0; y < h; ++y) row_plan->transform_batch(d + y * w * c, c, inverse);
  fft_plan(h)->transform_batch(d, w * c, inverse);
}

void require_spectrum(const Shape& shape, const char* op) {
  if (shape.size() != 3) throw ShapeError(std::string(op) + ": expected H x W x C, got " + to_string(shape));
}

}  // namespace

ComplexTensor fft2(const Tensor& x) {
  require_hwc(x, "fft2");
  ComplexTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = {x[i], 0.0};
  transform2d(out, false);
  return out;
}

ComplexTensor fft2(const ComplexTensor& x) {
  require_spectrum(x.shape(), "fft2");
  ComplexTensor out = x;
  transform2d(out, false);
  return out;
}

ComplexTensor ifft2_complex(const ComplexTensor& x) {
  require_spectrum(x.shape(), "ifft2");
  ComplexTensor out = x;
  transform2d(out, true);
  const double norm = 1.0 / static_cast<double>(x.dim(0) * x.dim(1));
  for (auto& v : out.data()) v *= norm;
  return out;
}

Tensor ifft2(const ComplexTensor& x) {
  ComplexTensor z = ifft2_complex(x);
#ifndef NDEBUG
  double residue = 0.0;
  for (const auto& v : z.data()) residue = std::max(residue, std::abs(v.imag()));
  double scale = 1.0;
  for (const auto& v : z.data()) scale = std::max(scale, std::abs(v.real()));
  if (residue > 1e-9 * scale) {
    throw NumericError("ifft2: spectrum is not conjugate symmetric (imaginary residue " + std::to_string(residue) +
                       ")");
  }
#endif
  return z.real();
}

}  // namespace flk
