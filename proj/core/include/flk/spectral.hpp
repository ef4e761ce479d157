#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "flk/tensor.hpp"

namespace flk {

using Complex = std::complex<double>;

/// Complex counterpart of Tensor, produced by the 2-D FFT. Shape is H x W x C.
class ComplexTensor {
 public:
  ComplexTensor() = default;
  explicit ComplexTensor(Shape shape);
  ComplexTensor(Shape shape, std::vector<Complex> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<Complex> data() noexcept { return data_; }
  std::span<const Complex> data() const noexcept { return data_; }
  Complex& operator[](std::size_t i) noexcept { return data_[i]; }
  const Complex& operator[](std::size_t i) const noexcept { return data_[i]; }

  Tensor real() const;
  Tensor imag() const;

  /// Interleaved (re, im) pairs: shape gains a trailing axis of size 2.
  Tensor to_pairs() const;
  static ComplexTensor from_pairs(const Tensor& pairs);

 private:
  Shape shape_;
  std::vector<Complex> data_;
};

/// One-dimensional DFT plan for a fixed length. Lengths whose prime factors
/// are all <= 13 run as mixed-radix Cooley-Tukey; anything else goes through
/// Bluestein's chirp-z convolution on a power-of-two inner plan.
class FftPlan {
 public:
  explicit FftPlan(std::size_t n);
  ~FftPlan();
  FftPlan(const FftPlan&) = delete;
  FftPlan& operator=(const FftPlan&) = delete;

  std::size_t size() const noexcept { return n_; }
  bool uses_bluestein() const noexcept { return inner_ != nullptr; }

  /// In-place unnormalized transform, sign -1 (forward) or +1 (inverse).
  void forward(std::span<Complex> data) const;
  void inverse(std::span<Complex> data) const;
  /// Transforms `batch` interleaved sequences in place: element j of sequence b
  /// is data[j * batch + b].
  void transform_batch(Complex* data, std::size_t batch, bool inverse) const;

 private:
  void radix(const Complex* in, std::size_t stride, Complex* out, std::size_t n, std::size_t level,
             std::size_t batch, bool inverse) const;
  void bluestein(std::span<Complex> data) const;

  std::size_t n_;
  std::vector<std::size_t> factors_;
  std::vector<Complex> twiddles_;  // exp(-2 pi i j / n)

  std::unique_ptr<FftPlan> inner_;
  std::vector<Complex> chirp_;       // exp(-i pi k^2 / n)
  std::vector<Complex> kernel_fft_;  // forward DFT of the padded conjugate chirp
};

/// Cached plan for length n. Plans are immutable and shared across threads.
std::shared_ptr<const FftPlan> fft_plan(std::size_t n);

/// Unnormalized forward 2-D DFT over the H and W axes, per channel.
ComplexTensor fft2(const Tensor& x);
ComplexTensor fft2(const ComplexTensor& x);
/// Inverse 2-D DFT with 1/(HW) normalization.
ComplexTensor ifft2_complex(const ComplexTensor& x);
/// Real part of the inverse 2-D DFT. The input is expected to be conjugate
/// symmetric; debug builds check the discarded imaginary residue.
Tensor ifft2(const ComplexTensor& x);

bool is_conjugate_symmetric(const ComplexTensor& x, double tol);

Tensor amplitude(const ComplexTensor& x);
/// Phase in (-pi, pi]; the phase of 0 is 0.
Tensor phase(const ComplexTensor& x);
std::pair<Tensor, Tensor> amp_phase(const ComplexTensor& x);
ComplexTensor from_amp_phase(const Tensor& amplitude, const Tensor& phase);

Tensor abs2(const ComplexTensor& x);
ComplexTensor real_to_complex(const Tensor& x);
/// Adds a real tensor to the real component.
ComplexTensor add_real(const ComplexTensor& x, const Tensor& a);
/// Scales real and imaginary parts bin-wise by a real gate.
ComplexTensor mul_real(const ComplexTensor& x, const Tensor& gate);
/// W(k) <- (W(k) + W(-k)) / 2 over the H x W frequency plane, per channel.
Tensor symmetrize_spectrum(const Tensor& w);

/// Exchanges the phase spectra of two equally shaped images.
std::pair<Tensor, Tensor> phase_swap(const Tensor& a, const Tensor& b);

enum class PhaseScore {
  kCosine,   // (1 + cos(dphi)) / 2
  kLiteral,  // |exp(i phi_t) exp(-i phi_1)|, identically one
};

Tensor phase_similarity(const Tensor& phase_t, const Tensor& phase_ref, PhaseScore score = PhaseScore::kCosine);
double phase_similarity_scalar(double phase_t, double phase_ref, PhaseScore score = PhaseScore::kCosine);

/// Real part of ifft2(exp(i (phase_t - phase_ref))): the classic phase
/// correlation surface built from two phase spectra.
Tensor phase_correlation_surface(const Tensor& phase_t, const Tensor& phase_ref);

struct Shift {
  std::size_t dy = 0;
  std::size_t dx = 0;
  friend bool operator==(const Shift&, const Shift&) = default;
};

/// Circular shift (dy, dx) such that b[(y + dy) % H][(x + dx) % W] ~ a[y][x].
/// Accepts H x W or H x W x 1 tensors.
Shift phase_correlation_peak(const Tensor& a, const Tensor& b);

/// Wiener-Khinchin autocorrelation per channel: ifft2(|fft2(x)|^2).
Tensor autocorrelation(const Tensor& x);

/// Circularly rolls an H x W x C tensor so out[(y + dy) % H][(x + dx) % W] = x[y][x].
Tensor roll(const Tensor& x, std::size_t dy, std::size_t dx);

}  // namespace flk
