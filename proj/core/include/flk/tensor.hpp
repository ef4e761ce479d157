#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flk/error.hpp"

namespace flk {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_product(const Shape& shape);

/// Dense row-major array of doubles. Feature maps use the channel-last
/// layout H x W x C; there is no batch dimension.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value) { return Tensor(Shape{1}, value); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // H x W x C accessors.
  double& at(std::size_t y, std::size_t x, std::size_t c) { return data_[(y * shape_[1] + x) * shape_[2] + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return data_[(y * shape_[1] + x) * shape_[2] + c]; }

  double item() const;
  Tensor reshaped(Shape shape) const;
  bool all_finite() const noexcept;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

void require_hwc(const Tensor& x, const char* op);
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);
double max_abs_diff(const Tensor& a, const Tensor& b);

// Elementwise arithmetic.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// Multiplies every element of `x` by the single value held in `s`.
Tensor mul_scalar(const Tensor& s, const Tensor& x);
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

double sum(const Tensor& x);
double dot(const Tensor& a, const Tensor& b);

// Activations.
Tensor relu(const Tensor& x);
/// Exact erf form: 0.5 x (1 + erf(x / sqrt 2)).
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
/// Softmax over the last axis.
Tensor softmax_rows(const Tensor& x);

double gelu_scalar(double x);
double gelu_grad_scalar(double x);

inline constexpr double kLayerNormEps = 1e-5;
/// Normalizes each pixel across channels, then applies per-channel affine.
Tensor layer_norm(const Tensor& x, const Tensor& weight, const Tensor& bias);

// Channel bookkeeping on H x W x C tensors.
Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor slice_channels(const Tensor& x, std::size_t begin, std::size_t count);
/// Channels a0, b0, a1, b1, ...; pairs up matching channels for grouped convs.
Tensor interleave_channels(const Tensor& a, const Tensor& b);
/// Inverse of interleave_channels.
std::pair<Tensor, Tensor> deinterleave_channels(const Tensor& x);

Tensor transpose_hw(const Tensor& x);

// Padding. Pads the bottom and right edges by mirror reflection (edge not repeated).
Tensor reflect_pad(const Tensor& x, std::size_t target_h, std::size_t target_w);
/// Keeps the top-left H x W region.
Tensor crop(const Tensor& x, std::size_t h, std::size_t w);
/// Adjoint of crop: zero-pads back to (full_h, full_w).
Tensor uncrop(const Tensor& x, std::size_t full_h, std::size_t full_w);

// ---------------------------------------------------------------------------
// Convolution

struct ConvSpec {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
  std::size_t groups = 1;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  bool has_bias = true;

  /// Zero-padded "same" convolution (spatial size preserved at stride 1).
  static ConvSpec same(std::size_t kernel, std::size_t in_channels, std::size_t out_channels,
                       std::size_t groups = 1, std::size_t stride = 1);

  ConvSpec without_bias() const {
    ConvSpec s = *this;
    s.has_bias = false;
    return s;
  }

  /// Weight layout is [Cout, k, k, Cin / groups].
  Shape weight_shape() const { return {out_channels, kernel, kernel, in_channels / groups}; }
  std::size_t out_size(std::size_t in) const { return (in + 2 * padding - kernel) / stride + 1; }
  void validate() const;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Cross-correlation with zero padding.
Tensor conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& weight, const Tensor* bias);
Tensor conv2d_grad_input(const Tensor& grad_out, const ConvSpec& spec, const Tensor& weight,
                         std::size_t in_h, std::size_t in_w);
Tensor conv2d_grad_weight(const Tensor& grad_out, const Tensor& x, const ConvSpec& spec);
Tensor conv2d_grad_bias(const Tensor& grad_out);

/// 2x nearest-neighbour enlargement.
Tensor upsample_nearest(const Tensor& x);
/// Adjoint of upsample_nearest: sums each 2x2 block.
Tensor upsample_nearest_adjoint(const Tensor& g);

// ---------------------------------------------------------------------------
// Window attention kernels. Windows are [nWin, M*M, C].

Tensor window_partition(const Tensor& x, std::size_t window);
Tensor window_merge(const Tensor& windows, std::size_t h, std::size_t w);

/// S[n, head, i, j] = scale * <Q[n, i, head slice], K[n, j, head slice]>.
Tensor attn_scores(const Tensor& q, const Tensor& k, std::size_t heads, double scale);
void attn_scores_grad(const Tensor& grad, const Tensor& q, const Tensor& k, std::size_t heads, double scale,
                      Tensor& grad_q, Tensor& grad_k);

/// Adds the relative positional bias table [heads, (2M-1)^2] to scores [n, heads, M^2, M^2].
Tensor add_rel_bias(const Tensor& scores, const Tensor& table, std::size_t window);
Tensor rel_bias_table_grad(const Tensor& grad, std::size_t heads, std::size_t window);
std::size_t rel_bias_index(std::size_t i, std::size_t j, std::size_t window);

/// O[n, i, c] = sum_j P[n, head(c), i, j] * V[n, j, c].
Tensor attn_apply(const Tensor& probs, const Tensor& v, std::size_t heads);
void attn_apply_grad(const Tensor& grad, const Tensor& probs, const Tensor& v, std::size_t heads,
                     Tensor& grad_probs, Tensor& grad_v);

// ---------------------------------------------------------------------------
// Resampling composites, written once for eager tensors and traced values.

/// 3x3 stride-2 convolution; halves H and W.
template <class T>
T downsample(const T& x, const ConvSpec& spec, const T& weight, const T& bias) {
  if (x.shape()[0] % 2 != 0 || x.shape()[1] % 2 != 0) {
    throw ShapeError("downsample: spatial size " + to_string(x.shape()) + " must be even");
  }
  return conv2d(x, spec, weight, &bias);
}

/// 2x nearest-neighbour enlargement followed by a 3x3 stride-1 convolution.
template <class T>
T upsample(const T& x, const ConvSpec& spec, const T& weight, const T& bias) {
  return conv2d(upsample_nearest(x), spec, weight, &bias);
}

}  // namespace flk
