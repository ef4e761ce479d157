#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "flk/spectral.hpp"
#include "flk/tensor.hpp"
#include "flk/wavelet.hpp"

// Network building blocks. Every block is a template over the value type so
// the same code runs eagerly on flk::Tensor and traced on flk::ad::Var; the
// primitive calls resolve by argument-dependent lookup.

namespace flk {

template <class T>
struct ConvLayer {
  ConvSpec spec;
  T weight;
  T bias;
};

template <class T>
T conv(const ConvLayer<T>& layer, const T& x) {
  return conv2d(x, layer.spec, layer.weight, layer.spec.has_bias ? &layer.bias : nullptr);
}

template <class T>
struct LayerNormParams {
  T weight;
  T bias;
};

// ---------------------------------------------------------------------------
// Phase-based fusion

template <class T>
struct PfmParams {
  ConvLayer<T> gate0;  // 3x3, C -> C, on the similarity map of frame 0
  ConvLayer<T> gate2;  // 3x3, C -> C, on the similarity map of frame 2
  ConvLayer<T> fuse;   // 3x3, 3C -> C
};

/// Intermediate maps exposed for diagnostics.
template <class T>
struct PfmTrace {
  T similarity0, similarity2;
  T gate_map0, gate_map2;
  T enhanced0, enhanced2;
};

/// Fuses reference frames 0 and 2 into base frame 1. Each reference spectrum
/// is gated bin-wise by a sigmoid map computed from its phase agreement with
/// the base frame; the gate is symmetrized so the spatial result stays real.
template <class T>
T pfm_fuse(const T& x0, const T& x1, const T& x2, const PfmParams<T>& p, PhaseScore score = PhaseScore::kCosine,
           PfmTrace<T>* trace = nullptr) {
  if (x0.shape() != x1.shape() || x2.shape() != x1.shape()) {
    throw ShapeError("pfm_fuse: frame features must share one shape, got " + to_string(x0.shape()) + ", " +
                     to_string(x1.shape()) + ", " + to_string(x2.shape()));
  }
  const T phase_ref = phase(fft2(x1));
  auto enhance = [&](const T& xt, const ConvLayer<T>& gate, T* similarity_out, T* gate_out) {
    const auto spectrum = fft2(xt);
    const T similarity = phase_similarity(phase(spectrum), phase_ref, score);
    const T gate_map = symmetrize_spectrum(sigmoid(conv(gate, similarity)));
    if (similarity_out) *similarity_out = similarity;
    if (gate_out) *gate_out = gate_map;
    return ifft2(mul_real(spectrum, gate_map));
  };
  const T enhanced0 = enhance(x0, p.gate0, trace ? &trace->similarity0 : nullptr, trace ? &trace->gate_map0 : nullptr);
  const T enhanced2 = enhance(x2, p.gate2, trace ? &trace->similarity2 : nullptr, trace ? &trace->gate_map2 : nullptr);
  if (trace) {
    trace->enhanced0 = enhanced0;
    trace->enhanced2 = enhanced2;
  }
  return relu(conv(p.fuse, concat_channels(std::vector<T>{enhanced0, x1, enhanced2})));
}

// ---------------------------------------------------------------------------
// Autocorrelation feed-forward network

template <class T>
struct AffnParams {
  T alpha;  // scalar, frequency-domain modulation
  T beta;   // scalar, autocorrelation reinforcement
  ConvLayer<T> expand;   // 1x1, C -> 2 * hidden
  ConvLayer<T> dwconv;   // 3x3 depthwise over hidden
  ConvLayer<T> project;  // 1x1, hidden -> C
};

inline std::size_t affn_hidden(std::size_t channels, double expansion) {
  return static_cast<std::size_t>(std::ceil(expansion * static_cast<double>(channels)));
}

/// F = expand(x); Y = fft2(F);
/// F' = ifft2(Y + alpha |Y|^2) + beta ifft2(|Y|^2), |Y|^2 added to the real part;
/// out = project(dwconv(gelu(F'_1) * F'_2)) with F'_1, F'_2 the channel halves.
template <class T>
T affn_forward(const T& x, const AffnParams<T>& p) {
  const T expanded = conv(p.expand, x);
  const auto spectrum = fft2(expanded);
  const T power = abs2(spectrum);
  const T autocorr = ifft2(real_to_complex(power));
  const T mixed = ifft2(add_real(spectrum, mul_scalar(p.alpha, power))) + mul_scalar(p.beta, autocorr);
  const std::size_t hidden = mixed.shape()[2] / 2;
  const T gated = gelu(slice_channels(mixed, 0, hidden)) * slice_channels(mixed, hidden, hidden);
  return conv(p.project, conv(p.dwconv, gated));
}

// ---------------------------------------------------------------------------
// Window attention

/// Multi-head self-attention inside non-overlapping window x window tiles,
/// with a learned relative positional bias table [heads, (2M-1)^2].
template <class T>
T window_attention_core(const T& q, const T& k, const T& v, const T& rel_bias, std::size_t heads,
                        std::size_t window) {
  const std::size_t h = q.shape()[0], w = q.shape()[1], c = q.shape()[2];
  if (heads == 0 || c % heads != 0) {
    throw ShapeError("window attention: " + std::to_string(c) + " channels not divisible by " +
                     std::to_string(heads) + " heads");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(c / heads));
  const T scores = add_rel_bias(attn_scores(window_partition(q, window), window_partition(k, window), heads, scale),
                                rel_bias, window);
  return window_merge(attn_apply(softmax_rows(scores), window_partition(v, window), heads), h, w);
}

template <class T>
struct WindowAttnParams {
  std::size_t heads = 1;
  std::size_t window = 8;
  ConvLayer<T> q, k, v;
  ConvLayer<T> proj;
  T rel_bias;
};

/// Plain window multi-head attention (encoder side).
template <class T>
T attention(const T& x, const WindowAttnParams<T>& p) {
  return conv(p.proj, window_attention_core(conv(p.q, x), conv(p.k, x), conv(p.v, x), p.rel_bias, p.heads, p.window));
}

template <class T>
struct WdamParams {
  std::size_t heads = 1;
  std::size_t window = 8;
  ConvLayer<T> q, k, v;     // 1x1 on LL
  ConvLayer<T> merge;       // 1x1 head merge on LL
  ConvLayer<T> modulation;  // 3x3, 2C -> C, grouped per channel over interleaved (LH_c, HL_c)
  ConvLayer<T> high;        // 3x3, 3C -> 3C over [LH, HL, HH]
  ConvLayer<T> proj;        // 1x1 after recomposition
  T rel_bias;
};

struct WdamOptions {
  /// When false LL passes through untouched (diagnostic identity path).
  bool attention_enabled = true;
};

/// Wavelet directional attention: window attention on the Haar LL band with
/// values modulated by a sigmoid map derived from the LH and HL bands; the
/// high bands pass through a 3x3 refinement before recomposition.
template <class T>
T wdam_attention(const T& x, const WdamParams<T>& p, WdamOptions options = {}) {
  const std::size_t h = x.shape()[0], w = x.shape()[1], c = x.shape()[2];
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("wdam: spatial size " + to_string(x.shape()) + " must be even");
  if ((h / 2) % p.window != 0 || (w / 2) % p.window != 0) {
    throw ShapeError("wdam: half-resolution grid " + std::to_string(h / 2) + "x" + std::to_string(w / 2) +
                     " not divisible by window " + std::to_string(p.window));
  }
  if (p.heads == 0 || c % p.heads != 0) {
    throw ShapeError("wdam: " + std::to_string(c) + " channels not divisible by " + std::to_string(p.heads) + " heads");
  }
  const Subbands<T> bands = haar_dwt(x);
  T ll = bands.ll;
  if (options.attention_enabled) {
    const T modulation = sigmoid(conv(p.modulation, interleave_channels(bands.lh, bands.hl)));
    const T values = modulation * conv(p.v, bands.ll);
    ll = conv(p.merge, window_attention_core(conv(p.q, bands.ll), conv(p.k, bands.ll), values, p.rel_bias, p.heads,
                                             p.window));
  }
  const T high = conv(p.high, concat_channels(std::vector<T>{bands.lh, bands.hl, bands.hh}));
  const T recomposed = haar_idwt(Subbands<T>{ll, slice_channels(high, 0, c), slice_channels(high, c, c),
                                             slice_channels(high, 2 * c, c)});
  return conv(p.proj, recomposed);
}

template <class T>
T attention(const T& x, const WdamParams<T>& p) {
  return wdam_attention(x, p);
}

// ---------------------------------------------------------------------------
// Transformer block

template <class T, class Attn>
struct BlockParams {
  LayerNormParams<T> norm1;
  Attn attn;
  LayerNormParams<T> norm2;
  AffnParams<T> ffn;
};

template <class T>
using EncoderBlockParams = BlockParams<T, WindowAttnParams<T>>;
template <class T>
using DecoderBlockParams = BlockParams<T, WdamParams<T>>;

/// Pre-norm residual wiring: y = x + Attn(LN(x)); out = y + AFFN(LN(y)).
template <class T, class Attn>
T transformer_block(const T& x, const BlockParams<T, Attn>& p) {
  const T y = x + attention(layer_norm(x, p.norm1.weight, p.norm1.bias), p.attn);
  return y + affn_forward(layer_norm(y, p.norm2.weight, p.norm2.bias), p.ffn);
}

// ---------------------------------------------------------------------------
// Multiply-accumulate accounting

struct AttentionFlops {
  std::uint64_t attention_core = 0;     // QK^T plus attn * V
  std::uint64_t qkv_projection = 0;
  std::uint64_t merge_projection = 0;   // head merge on the attention grid
  std::uint64_t modulation_conv = 0;
  std::uint64_t wavelet_transforms = 0;
  std::uint64_t high_band_conv = 0;
  std::uint64_t output_projection = 0;  // full-resolution projection after recomposition

  /// Attention branch: core, projections and the modulation map.
  std::uint64_t branch() const { return attention_core + qkv_projection + merge_projection + modulation_conv; }
  std::uint64_t total() const { return branch() + wavelet_transforms + high_band_conv + output_projection; }
};

struct FlopReport {
  std::size_t height = 0, width = 0, channels = 0, window = 0, heads = 0;
  AttentionFlops wmha;
  AttentionFlops wdam;
  double core_ratio = 0.0;    // wdam.attention_core / wmha.attention_core
  double branch_ratio = 0.0;  // wdam.branch() / wmha.branch()
  double total_ratio = 0.0;   // wdam.total() / wmha.total()
};

/// Exact MAC counts for window attention versus WDAM on an H x W x C input.
FlopReport flops_report(std::size_t height, std::size_t width, std::size_t channels, std::size_t window,
                        std::size_t heads);

}  // namespace flk
