#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "flk/blocks.hpp"
#include "flk/spectral.hpp"
#include "flk/tensor.hpp"

namespace flk {

struct ModelConfig {
  std::vector<std::size_t> channels{32, 64, 96};
  std::vector<std::size_t> blocks{2, 2, 2};
  std::vector<std::size_t> heads{1, 2, 4};
  std::size_t window = 8;
  double gamma = 2.66;
  PhaseScore phase_score = PhaseScore::kCosine;

  static ModelConfig tiny();

  std::size_t levels() const noexcept { return channels.size(); }
  std::size_t hidden(std::size_t level) const { return affn_hidden(channels.at(level), gamma); }
  /// Spatial sizes must be multiples of this; other inputs are reflect-padded.
  std::size_t size_multiple() const { return (std::size_t{1} << levels()) * window; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Named parameters in insertion order.
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const { return index_.contains(name); }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t scalar_count() const;
  std::vector<std::string> names() const;

  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  friend bool operator==(const ParamStore& a, const ParamStore& b) { return a.entries_ == b.entries_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// ---------------------------------------------------------------------------
// Structured view of the parameters, shared by the eager and traced paths.

template <class T>
struct EncoderLevel {
  std::vector<EncoderBlockParams<T>> blocks;
  ConvLayer<T> down;  // 3x3 stride 2 into the next width
};

template <class T>
struct DecoderLevel {
  ConvLayer<T> up;    // 3x3 after nearest enlargement
  ConvLayer<T> fuse;  // 1x1 over [upsampled, skip]
  std::vector<DecoderBlockParams<T>> blocks;
};

template <class T>
struct Model {
  ConvLayer<T> embed;  // 3x3, 9 -> 3C, one group per frame
  PfmParams<T> pfm;
  std::vector<EncoderLevel<T>> encoder;
  std::vector<DecoderLevel<T>> decoder;  // decoder[l] runs at the resolution of encoder level l
  ConvLayer<T> head;                     // 3x3, C -> 3, residual output
};

/// How build_model initializes a parameter.
enum class ParamRole { kConvWeight, kZero, kOne, kHeadWeight };

namespace detail {

template <class Fn>
void visit_conv(Fn& fn, const std::string& name, const ConvSpec& spec, bool head = false) {
  fn(name + ".weight", spec.weight_shape(), head ? ParamRole::kHeadWeight : ParamRole::kConvWeight);
  if (spec.has_bias) fn(name + ".bias", Shape{spec.out_channels}, ParamRole::kZero);
}

}  // namespace detail

ConvSpec embed_spec(const ModelConfig& cfg);
/// 1x1 projection. Keys carry no bias: softmax ignores a shift shared by a whole row.
ConvSpec attn_projection_spec(std::string_view name, std::size_t channels);
ConvSpec head_spec(const ModelConfig& cfg);

/// Visits every parameter of `cfg` in storage order as fn(name, shape, role).
template <class Fn>
void for_each_param(const ModelConfig& cfg, Fn&& fn);

/// Builds the structured parameter view from a lookup name -> T.
template <class T, class Get>
Model<T> bind_model(const ModelConfig& cfg, Get&& get);

/// Fan-in scaled uniform weights, zero biases and bias tables, unit norm
/// gains, alpha = beta = 0 and a zero residual head.
ParamStore build_model(const ModelConfig& cfg, std::uint64_t seed);

/// Residual R on inputs whose size is already a multiple of cfg.size_multiple().
template <class T>
T forward_residual_core(const Model<T>& m, const ModelConfig& cfg, const T& i0, const T& i1, const T& i2,
                        std::vector<T>* similarity_maps = nullptr);

struct Burst {
  Tensor i0, i1, i2;
};

/// Residual map R for frames of any size (reflect-padded internally, cropped back).
Tensor forward_residual(const Burst& frames, const ParamStore& params, const ModelConfig& cfg);
/// I1 + R, unclamped. Clamp with clamp01 at image emission.
Tensor forward(const Burst& frames, const ParamStore& params, const ModelConfig& cfg);

/// The two phase-similarity maps computed inside the fusion stage.
std::vector<Tensor> fusion_similarity_maps(const Burst& frames, const ParamStore& params, const ModelConfig& cfg);

Tensor clamp01(const Tensor& x);

/// Reflect-pads three frames to the next multiple of cfg.size_multiple().
Burst pad_burst(const Burst& frames, const ModelConfig& cfg);
void check_burst(const Burst& frames);

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path);
ParamStore load_checkpoint(const std::filesystem::path& path);
/// Loads and checks names and shapes against the parameters of `cfg`.
ParamStore load_model_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg);
/// Recovers widths, depths, heads, window and expansion from parameter shapes.
ModelConfig infer_config(const ParamStore& params);

// ---------------------------------------------------------------------------
// Template definitions

template <class Fn>
void for_each_param(const ModelConfig& cfg, Fn&& fn) {
  cfg.validate();
  const std::size_t levels = cfg.levels();
  const std::size_t c0 = cfg.channels[0];
  const std::size_t bias_len = (2 * cfg.window - 1) * (2 * cfg.window - 1);

  detail::visit_conv(fn, "embed", embed_spec(cfg));
  detail::visit_conv(fn, "pfm.gate0", ConvSpec::same(3, c0, c0));
  detail::visit_conv(fn, "pfm.gate2", ConvSpec::same(3, c0, c0));
  detail::visit_conv(fn, "pfm.fuse", ConvSpec::same(3, 3 * c0, c0));

  auto visit_norm = [&](const std::string& name, std::size_t c) {
    fn(name + ".weight", Shape{c}, ParamRole::kOne);
    fn(name + ".bias", Shape{c}, ParamRole::kZero);
  };
  auto visit_ffn = [&](const std::string& name, std::size_t level) {
    const std::size_t c = cfg.channels[level], hid = cfg.hidden(level);
    fn(name + ".alpha", Shape{1}, ParamRole::kZero);
    fn(name + ".beta", Shape{1}, ParamRole::kZero);
    detail::visit_conv(fn, name + ".expand", ConvSpec::same(1, c, 2 * hid));
    detail::visit_conv(fn, name + ".dwconv", ConvSpec::same(3, hid, hid, hid));
    detail::visit_conv(fn, name + ".project", ConvSpec::same(1, hid, c));
  };

  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t c = cfg.channels[l];
    const std::string stage = "enc" + std::to_string(l);
    for (std::size_t b = 0; b < cfg.blocks[l]; ++b) {
      const std::string block = stage + ".block" + std::to_string(b);
      visit_norm(block + ".norm1", c);
      for (const char* proj : {"q", "k", "v", "proj"}) {
        detail::visit_conv(fn, block + ".attn." + proj, attn_projection_spec(proj, c));
      }
      fn(block + ".attn.rel_bias", Shape{cfg.heads[l], bias_len}, ParamRole::kZero);
      visit_norm(block + ".norm2", c);
      visit_ffn(block + ".ffn", l);
    }
    const std::size_t next = l + 1 < levels ? cfg.channels[l + 1] : c;
    detail::visit_conv(fn, stage + ".down", ConvSpec::same(3, c, next, 1, 2));
  }

  for (std::size_t i = 0; i < levels; ++i) {
    const std::size_t l = levels - 1 - i;
    const std::size_t c = cfg.channels[l];
    const std::size_t below = l + 1 < levels ? cfg.channels[l + 1] : c;
    const std::string stage = "dec" + std::to_string(l);
    detail::visit_conv(fn, stage + ".up", ConvSpec::same(3, below, c));
    detail::visit_conv(fn, stage + ".fuse", ConvSpec::same(1, 2 * c, c));
    for (std::size_t b = 0; b < cfg.blocks[l]; ++b) {
      const std::string block = stage + ".block" + std::to_string(b);
      visit_norm(block + ".norm1", c);
      for (const char* proj : {"q", "k", "v", "merge"}) {
        detail::visit_conv(fn, block + ".attn." + proj, attn_projection_spec(proj, c));
      }
      detail::visit_conv(fn, block + ".attn.modulation", ConvSpec::same(3, 2 * c, c, c));
      detail::visit_conv(fn, block + ".attn.high", ConvSpec::same(3, 3 * c, 3 * c));
      detail::visit_conv(fn, block + ".attn.proj", ConvSpec::same(1, c, c));
      fn(block + ".attn.rel_bias", Shape{cfg.heads[l], bias_len}, ParamRole::kZero);
      visit_norm(block + ".norm2", c);
      visit_ffn(block + ".ffn", l);
    }
  }

  detail::visit_conv(fn, "head", head_spec(cfg), true);
}

template <class T, class Get>
Model<T> bind_model(const ModelConfig& cfg, Get&& get) {
  cfg.validate();
  const std::size_t levels = cfg.levels();
  const std::size_t c0 = cfg.channels[0];

  auto conv_layer = [&](const std::string& name, const ConvSpec& spec) {
    ConvLayer<T> layer{spec, get(name + ".weight"), T{}};
    if (spec.has_bias) layer.bias = get(name + ".bias");
    return layer;
  };
  auto norm = [&](const std::string& name) { return LayerNormParams<T>{get(name + ".weight"), get(name + ".bias")}; };
  auto ffn = [&](const std::string& name, std::size_t level) {
    const std::size_t c = cfg.channels[level], hid = cfg.hidden(level);
    return AffnParams<T>{get(name + ".alpha"), get(name + ".beta"),
                         conv_layer(name + ".expand", ConvSpec::same(1, c, 2 * hid)),
                         conv_layer(name + ".dwconv", ConvSpec::same(3, hid, hid, hid)),
                         conv_layer(name + ".project", ConvSpec::same(1, hid, c))};
  };

  Model<T> m;
  m.embed = conv_layer("embed", embed_spec(cfg));
  m.pfm.gate0 = conv_layer("pfm.gate0", ConvSpec::same(3, c0, c0));
  m.pfm.gate2 = conv_layer("pfm.gate2", ConvSpec::same(3, c0, c0));
  m.pfm.fuse = conv_layer("pfm.fuse", ConvSpec::same(3, 3 * c0, c0));

  m.encoder.resize(levels);
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t c = cfg.channels[l];
    const std::string stage = "enc" + std::to_string(l);
    for (std::size_t b = 0; b < cfg.blocks[l]; ++b) {
      const std::string block = stage + ".block" + std::to_string(b);
      EncoderBlockParams<T> p;
      p.norm1 = norm(block + ".norm1");
      p.attn.heads = cfg.heads[l];
      p.attn.window = cfg.window;
      p.attn.q = conv_layer(block + ".attn.q", ConvSpec::same(1, c, c));
      p.attn.k = conv_layer(block + ".attn.k", attn_projection_spec("k", c));
      p.attn.v = conv_layer(block + ".attn.v", ConvSpec::same(1, c, c));
      p.attn.proj = conv_layer(block + ".attn.proj", ConvSpec::same(1, c, c));
      p.attn.rel_bias = get(block + ".attn.rel_bias");
      p.norm2 = norm(block + ".norm2");
      p.ffn = ffn(block + ".ffn", l);
      m.encoder[l].blocks.push_back(std::move(p));
    }
    const std::size_t next = l + 1 < levels ? cfg.channels[l + 1] : c;
    m.encoder[l].down = conv_layer(stage + ".down", ConvSpec::same(3, c, next, 1, 2));
  }

  m.decoder.resize(levels);
  for (std::size_t i = 0; i < levels; ++i) {
    const std::size_t l = levels - 1 - i;
    const std::size_t c = cfg.channels[l];
    const std::size_t below = l + 1 < levels ? cfg.channels[l + 1] : c;
    const std::string stage = "dec" + std::to_string(l);
    DecoderLevel<T>& level = m.decoder[l];
    level.up = conv_layer(stage + ".up", ConvSpec::same(3, below, c));
    level.fuse = conv_layer(stage + ".fuse", ConvSpec::same(1, 2 * c, c));
    for (std::size_t b = 0; b < cfg.blocks[l]; ++b) {
      const std::string block = stage + ".block" + std::to_string(b);
      DecoderBlockParams<T> p;
      p.norm1 = norm(block + ".norm1");
      p.attn.heads = cfg.heads[l];
      p.attn.window = cfg.window;
      p.attn.q = conv_layer(block + ".attn.q", ConvSpec::same(1, c, c));
      p.attn.k = conv_layer(block + ".attn.k", attn_projection_spec("k", c));
      p.attn.v = conv_layer(block + ".attn.v", ConvSpec::same(1, c, c));
      p.attn.merge = conv_layer(block + ".attn.merge", ConvSpec::same(1, c, c));
      p.attn.modulation = conv_layer(block + ".attn.modulation", ConvSpec::same(3, 2 * c, c, c));
      p.attn.high = conv_layer(block + ".attn.high", ConvSpec::same(3, 3 * c, 3 * c));
      p.attn.proj = conv_layer(block + ".attn.proj", ConvSpec::same(1, c, c));
      p.attn.rel_bias = get(block + ".attn.rel_bias");
      p.norm2 = norm(block + ".norm2");
      p.ffn = ffn(block + ".ffn", l);
      level.blocks.push_back(std::move(p));
    }
  }

  m.head = conv_layer("head", head_spec(cfg));
  return m;
}

template <class T>
T forward_residual_core(const Model<T>& m, const ModelConfig& cfg, const T& i0, const T& i1, const T& i2,
                        std::vector<T>* similarity_maps) {
  const std::size_t levels = cfg.levels();
  const std::size_t c0 = cfg.channels[0];

  const T embedded = conv(m.embed, concat_channels(std::vector<T>{i0, i1, i2}));
  PfmTrace<T> trace;
  T x = pfm_fuse(slice_channels(embedded, 0, c0), slice_channels(embedded, c0, c0),
                 slice_channels(embedded, 2 * c0, c0), m.pfm, cfg.phase_score, similarity_maps ? &trace : nullptr);
  if (similarity_maps) *similarity_maps = {trace.similarity0, trace.similarity2};

  std::vector<T> skips;
  for (std::size_t l = 0; l < levels; ++l) {
    skips.push_back(x);
    for (const auto& block : m.encoder[l].blocks) x = transformer_block(x, block);
    const auto& down = m.encoder[l].down;
    x = downsample(x, down.spec, down.weight, down.bias);
  }

  for (std::size_t i = 0; i < levels; ++i) {
    const std::size_t l = levels - 1 - i;
    const auto& level = m.decoder[l];
    x = upsample(x, level.up.spec, level.up.weight, level.up.bias);
    x = conv(level.fuse, concat_channels(std::vector<T>{x, skips[l]}));
    for (const auto& block : level.blocks) x = transformer_block(x, block);
  }
  return conv(m.head, x);
}

}  // namespace flk
