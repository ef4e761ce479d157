#include "flk/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace flk {

std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

void check_dims(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape) {
    if (d == 0) throw ShapeError("tensor dimension sizes must be >= 1, got " + to_string(shape));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_dims(shape_);
  data_.assign(shape_product(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_dims(shape_);
  if (shape_product(shape_) != data_.size()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     to_string(shape_));
  }
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw ShapeError("axis out of range for shape " + to_string(shape_));
  return shape_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_product(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void require_hwc(const Tensor& x, const char* op) {
  if (x.rank() != 3) {
    throw ShapeError(std::string(op) + ": expected H x W x C tensor, got " + to_string(x.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

namespace {

template <class F>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f) {
  require_same_shape(a, b, op);
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

template <class F>
Tensor unary(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; });
}
Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x * s; });
}
Tensor mul_scalar(const Tensor& s, const Tensor& x) {
  if (s.size() != 1) throw ShapeError("mul_scalar: scale must hold one value, got " + to_string(s.shape()));
  return scale(x, s[0]);
}

double sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return acc;
}

double dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; });
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad_scalar(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Tensor gelu(const Tensor& x) { return unary(x, gelu_scalar); }

Tensor sigmoid(const Tensor& x) {
  return unary(x, [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

Tensor softmax_rows(const Tensor& x) {
  const std::size_t n = x.shape().back();
  Tensor out(x.shape());
  for (std::size_t r = 0; r < x.size() / n; ++r) {
    const double* in = x.data().data() + r * n;
    double* o = out.data().data() + r * n;
    const double m = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      o[i] = std::exp(in[i] - m);
      z += o[i];
    }
    for (std::size_t i = 0; i < n; ++i) o[i] /= z;
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  const std::size_t c = x.shape().back();
  if (weight.size() != c || bias.size() != c) {
    throw ShapeError("layer_norm: affine parameters must have " + std::to_string(c) + " entries");
  }
  Tensor out(x.shape());
  for (std::size_t p = 0; p < x.size() / c; ++p) {
    const double* in = x.data().data() + p * c;
    double* o = out.data().data() + p * c;
    double mean = 0.0;
    for (std::size_t i = 0; i < c; ++i) mean += in[i];
    mean /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t i = 0; i < c; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= static_cast<double>(c);
    const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
    for (std::size_t i = 0; i < c; ++i) o[i] = (in[i] - mean) * inv * weight[i] + bias[i];
  }
  return out;
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const std::size_t h = parts[0].dim(0), w = parts[0].dim(1);
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_hwc(p, "concat_channels");
    if (p.dim(0) != h || p.dim(1) != w) {
      throw ShapeError("concat_channels: spatial mismatch " + to_string(parts[0].shape()) + " vs " +
                       to_string(p.shape()));
    }
    total += p.dim(2);
  }
  Tensor out({h, w, total});
  for (std::size_t px = 0; px < h * w; ++px) {
    double* o = out.data().data() + px * total;
    for (const auto& p : parts) {
      const std::size_t c = p.dim(2);
      std::copy_n(p.data().data() + px * c, c, o);
      o += c;
    }
  }
  return out;
}

Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count) {
  require_hwc(x, "slice_channels");
  const std::size_t c = x.dim(2);
  if (count == 0 || begin + count > c) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + std::to_string(c) + " channels");
  }
  const std::size_t px_count = x.dim(0) * x.dim(1);
  Tensor out({x.dim(0), x.dim(1), count});
  for (std::size_t px = 0; px < px_count; ++px) {
    std::copy_n(x.data().data() + px * c + begin, count, out.data().data() + px * count);
  }
  return out;
}

Tensor interleave_channels(const Tensor& a, const Tensor& b) {
  require_hwc(a, "interleave_channels");
  require_same_shape(a, b, "interleave_channels");
  const std::size_t c = a.dim(2);
  Tensor out({a.dim(0), a.dim(1), 2 * c});
  for (std::size_t px = 0; px < a.size() / c; ++px)
    for (std::size_t k = 0; k < c; ++k) {
      out[px * 2 * c + 2 * k] = a[px * c + k];
      out[px * 2 * c + 2 * k + 1] = b[px * c + k];
    }
  return out;
}

std::pair<Tensor, Tensor> deinterleave_channels(const Tensor& x) {
  require_hwc(x, "deinterleave_channels");
  if (x.dim(2) % 2 != 0) throw ShapeError("deinterleave_channels: odd channel count");
  const std::size_t c = x.dim(2) / 2;
  Tensor a({x.dim(0), x.dim(1), c}), b({x.dim(0), x.dim(1), c});
  for (std::size_t px = 0; px < a.size() / c; ++px)
    for (std::size_t k = 0; k < c; ++k) {
      a[px * c + k] = x[px * 2 * c + 2 * k];
      b[px * c + k] = x[px * 2 * c + 2 * k + 1];
    }
  return {std::move(a), std::move(b)};
}

Tensor transpose_hw(const Tensor& x) {
  require_hwc(x, "transpose_hw");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor out({w, h, c});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t xx = 0; xx < w; ++xx)
      for (std::size_t k = 0; k < c; ++k) out.at(xx, y, k) = x.at(y, xx, k);
  return out;
}

namespace {

std::size_t reflect_index(std::size_t i, std::size_t n) {
  if (n == 1) return 0;
  const std::size_t period = 2 * (n - 1);
  i %= period;
  return i < n ? i : period - i;
}

}  // namespace

Tensor reflect_pad(const Tensor& x, std::size_t target_h, std::size_t target_w) {
  require_hwc(x, "reflect_pad");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (target_h < h || target_w < w) throw ShapeError("reflect_pad: target smaller than input");
  Tensor out({target_h, target_w, c});
  for (std::size_t y = 0; y < target_h; ++y) {
    const std::size_t sy = reflect_index(y, h);
    for (std::size_t xx = 0; xx < target_w; ++xx) {
      const std::size_t sx = reflect_index(xx, w);
      std::copy_n(x.data().data() + (sy * w + sx) * c, c, out.data().data() + (y * target_w + xx) * c);
    }
  }
  return out;
}

Tensor crop(const Tensor& x, std::size_t h, std::size_t w) {
  require_hwc(x, "crop");
  if (h > x.dim(0) || w > x.dim(1) || h == 0 || w == 0) {
    throw ShapeError("crop: " + std::to_string(h) + "x" + std::to_string(w) + " outside " + to_string(x.shape()));
  }
  const std::size_t c = x.dim(2);
  Tensor out({h, w, c});
  for (std::size_t y = 0; y < h; ++y) {
    std::copy_n(x.data().data() + y * x.dim(1) * c, w * c, out.data().data() + y * w * c);
  }
  return out;
}

Tensor uncrop(const Tensor& x, std::size_t full_h, std::size_t full_w) {
  require_hwc(x, "uncrop");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (full_h < h || full_w < w) throw ShapeError("uncrop: target smaller than input");
  Tensor out({full_h, full_w, c});
  for (std::size_t y = 0; y < h; ++y) {
    std::copy_n(x.data().data() + y * w * c, w * c, out.data().data() + y * full_w * c);
  }
  return out;
}

Tensor upsample_nearest(const Tensor& x) {
  require_hwc(x, "upsample_nearest");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  Tensor out({2 * h, 2 * w, c});
  for (std::size_t y = 0; y < 2 * h; ++y)
    for (std::size_t xx = 0; xx < 2 * w; ++xx)
      std::copy_n(x.data().data() + ((y / 2) * w + xx / 2) * c, c, out.data().data() + (y * 2 * w + xx) * c);
  return out;
}

Tensor upsample_nearest_adjoint(const Tensor& g) {
  require_hwc(g, "upsample_nearest_adjoint");
  const std::size_t h = g.dim(0) / 2, w = g.dim(1) / 2, c = g.dim(2);
  Tensor out({h, w, c});
  for (std::size_t y = 0; y < 2 * h; ++y)
    for (std::size_t xx = 0; xx < 2 * w; ++xx)
      for (std::size_t k = 0; k < c; ++k) out.at(y / 2, xx / 2, k) += g.at(y, xx, k);
  return out;
}

}  // namespace flk
