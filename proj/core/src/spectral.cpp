#include <cmath>
#include <numbers>

#include "flk/spectral.hpp"

namespace flk {

ComplexTensor::ComplexTensor(Shape shape) : shape_(std::move(shape)) {
  data_.assign(shape_product(shape_), Complex{});
}

ComplexTensor::ComplexTensor(Shape shape, std::vector<Complex> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_product(shape_) != data_.size()) throw ShapeError("complex tensor data does not match shape");
}

Tensor ComplexTensor::real() const {
  Tensor out(shape_);
  for (std::size_t i = 0; i < data_.size(); ++i) out[i] = data_[i].real();
  return out;
}

Tensor ComplexTensor::imag() const {
  Tensor out(shape_);
  for (std::size_t i = 0; i < data_.size(); ++i) out[i] = data_[i].imag();
  return out;
}

Tensor ComplexTensor::to_pairs() const {
  Shape s = shape_;
  s.push_back(2);
  Tensor out(s);
  for (std::size_t i = 0; i < data_.size(); ++i) {
    out[2 * i] = data_[i].real();
    out[2 * i + 1] = data_[i].imag();
  }
  return out;
}

ComplexTensor ComplexTensor::from_pairs(const Tensor& pairs) {
  if (pairs.rank() < 2 || pairs.shape().back() != 2) {
    throw ShapeError("complex pairs need a trailing axis of size 2, got " + to_string(pairs.shape()));
  }
  Shape s(pairs.shape().begin(), pairs.shape().end() - 1);
  ComplexTensor out(s);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = {pairs[2 * i], pairs[2 * i + 1]};
  return out;
}

namespace {

void same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b));
}

}  // namespace

bool is_conjugate_symmetric(const ComplexTensor& x, double tol) {
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const Complex a = x[(u * w + v) * c + ch];
        const Complex b = x[(((h - u) % h) * w + (w - v) % w) * c + ch];
        if (std::abs(a - std::conj(b)) > tol) return false;
      }
  return true;
}

Tensor amplitude(const ComplexTensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::abs(x[i]);
  return out;
}

Tensor phase(const ComplexTensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const Complex v = x[i];
    // atan2 returns -pi for (-1, -0); fold onto +pi to stay in (-pi, pi].
    double p = (v.real() == 0.0 && v.imag() == 0.0) ? 0.0 : std::atan2(v.imag(), v.real());
    if (p == -std::numbers::pi) p = std::numbers::pi;
    out[i] = p;
  }
  return out;
}

std::pair<Tensor, Tensor> amp_phase(const ComplexTensor& x) { return {amplitude(x), phase(x)}; }

ComplexTensor from_amp_phase(const Tensor& amp, const Tensor& ph) {
  same_shape(amp.shape(), ph.shape(), "from_amp_phase");
  ComplexTensor out(amp.shape());
  for (std::size_t i = 0; i < amp.size(); ++i) out[i] = std::polar(amp[i], ph[i]);
  return out;
}

Tensor abs2(const ComplexTensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::norm(x[i]);
  return out;
}

ComplexTensor real_to_complex(const Tensor& x) {
  ComplexTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = {x[i], 0.0};
  return out;
}

ComplexTensor add_real(const ComplexTensor& x, const Tensor& a) {
  same_shape(x.shape(), a.shape(), "add_real");
  ComplexTensor out = x;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] += a[i];
  return out;
}

ComplexTensor mul_real(const ComplexTensor& x, const Tensor& gate) {
  same_shape(x.shape(), gate.shape(), "mul_real");
  ComplexTensor out = x;
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = {x[i].real() * gate[i], x[i].imag() * gate[i]};
  return out;
}

Tensor symmetrize_spectrum(const Tensor& w) {
  require_hwc(w, "symmetrize_spectrum");
  const std::size_t h = w.dim(0), wd = w.dim(1), c = w.dim(2);
  Tensor out(w.shape());
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < wd; ++v)
      for (std::size_t ch = 0; ch < c; ++ch)
        out.at(u, v, ch) = 0.5 * (w.at(u, v, ch) + w.at((h - u) % h, (wd - v) % wd, ch));
  return out;
}

std::pair<Tensor, Tensor> phase_swap(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "phase_swap");
  const auto [amp_a, ph_a] = amp_phase(fft2(a));
  const auto [amp_b, ph_b] = amp_phase(fft2(b));
  return {ifft2_complex(from_amp_phase(amp_a, ph_b)).real(), ifft2_complex(from_amp_phase(amp_b, ph_a)).real()};
}

double phase_similarity_scalar(double phase_t, double phase_ref, PhaseScore score) {
  if (score == PhaseScore::kLiteral) return std::abs(std::polar(1.0, phase_t) * std::polar(1.0, -phase_ref));
  return 0.5 * (1.0 + std::cos(phase_t - phase_ref));
}

Tensor phase_similarity(const Tensor& phase_t, const Tensor& phase_ref, PhaseScore score) {
  require_same_shape(phase_t, phase_ref, "phase_similarity");
  Tensor out(phase_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = phase_similarity_scalar(phase_t[i], phase_ref[i], score);
  return out;
}

Tensor phase_correlation_surface(const Tensor& phase_t, const Tensor& phase_ref) {
  require_same_shape(phase_t, phase_ref, "phase_correlation_surface");
  Tensor ones(phase_t.shape(), 1.0);
  return ifft2_complex(from_amp_phase(ones, sub(phase_t, phase_ref))).real();
}

namespace {

Tensor as_plane(const Tensor& x, const char* op) {
  if (x.rank() == 2) return x.reshaped({x.dim(0), x.dim(1), 1});
  if (x.rank() == 3 && x.dim(2) == 1) return x;
  throw ShapeError(std::string(op) + ": expected a single-channel H x W image, got " + to_string(x.shape()));
}

}  // namespace

Shift phase_correlation_peak(const Tensor& a, const Tensor& b) {
  const Tensor pa = as_plane(a, "phase_correlation_peak");
  const Tensor pb = as_plane(b, "phase_correlation_peak");
  require_same_shape(pa, pb, "phase_correlation_peak");
  const ComplexTensor fa = fft2(pa);
  const ComplexTensor fb = fft2(pb);

  // Spectrum norm excluding DC: zero for constant images.
  auto ac_energy = [](const ComplexTensor& f) {
    double e = 0.0;
    for (std::size_t i = 1; i < f.size(); ++i) e += std::norm(f[i]);
    return e;
  };
  const double ea = ac_energy(fa), eb = ac_energy(fb);
  const double dc = std::norm(fa[0]) + std::norm(fb[0]);
  if (ea <= 1e-24 * (1.0 + dc) || eb <= 1e-24 * (1.0 + dc)) {
    throw NumericError("phase_correlation_peak: degenerate input (constant image has no phase information)");
  }

  ComplexTensor cross(fa.shape());
  for (std::size_t i = 0; i < fa.size(); ++i) {
    const Complex r = fb[i] * std::conj(fa[i]);
    const double m = std::abs(r);
    cross[i] = m > 1e-300 ? r / m : Complex{};
  }
  const Tensor surface = ifft2_complex(cross).real();
  std::size_t best = 0;
  for (std::size_t i = 1; i < surface.size(); ++i) {
    if (surface[i] > surface[best]) best = i;
  }
  return {best / pa.dim(1), best % pa.dim(1)};
}

Tensor autocorrelation(const Tensor& x) { return ifft2(real_to_complex(abs2(fft2(x)))); }

Tensor roll(const Tensor& x, std::size_t dy, std::size_t dx) {
  require_hwc(x, "roll");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor out(x.shape());
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx)
      for (std::size_t ch = 0; ch < c; ++ch) out.at((y + dy) % h, (xx + dx) % w, ch) = x.at(y, xx, ch);
  return out;
}

}  // namespace flk
