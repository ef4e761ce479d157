#include "flk/verify.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "flk/blocks.hpp"
#include "flk/random.hpp"

namespace flk {

using ad::NamedTensor;
using ad::Tape;
using ad::Var;

bool VerifyReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::size_t VerifyReport::failures() const {
  return static_cast<std::size_t>(std::count_if(checks.begin(), checks.end(), [](const CheckResult& c) { return !c.passed; }));
}

void VerifyReport::append(const VerifyReport& other) {
  checks.insert(checks.end(), other.checks.begin(), other.checks.end());
}

namespace {

// Uniform in +-[lo, hi]: keeps probes away from kinks at zero.
Tensor away_from_zero(Rng& rng, Shape shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
  return t;
}

Tensor conv_weight(Rng& rng, const ConvSpec& spec) { return rng.uniform_tensor(spec.weight_shape(), -0.5, 0.5); }

// Pairs of the spectrum of a real tensor: conjugate symmetric by construction.
Tensor symmetric_pairs(Rng& rng, Shape shape) {
  return fft2(rng.uniform_tensor(std::move(shape), -1.0, 1.0)).to_pairs();
}

std::string worst_param(const ad::GradReport& report) {
  const auto it = std::max_element(report.params.begin(), report.params.end(),
                                   [](const ad::ParamCheck& a, const ad::ParamCheck& b) {
                                     return a.max_rel_error < b.max_rel_error;
                                   });
  return it == report.params.end() ? std::string() : it->name;
}

Tensor softmax_probe(Rng& rng, Shape shape) { return softmax_rows(rng.uniform_tensor(std::move(shape), -1.0, 1.0)); }

}  // namespace

std::vector<OpCase> op_registry(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<OpCase> ops;
  auto u = [&](Shape s) { return rng.uniform_tensor(std::move(s), -1.0, 1.0); };

  const Shape img{6, 6, 3};
  ops.push_back({"add", {{"a", u(img)}, {"b", u(img)}}, [](Tape&, const std::vector<Var>& x) { return x[0] + x[1]; }, 0});
  ops.push_back({"sub", {{"a", u(img)}, {"b", u(img)}}, [](Tape&, const std::vector<Var>& x) { return x[0] - x[1]; }, 1});
  ops.push_back({"mul", {{"a", u(img)}, {"b", u(img)}}, [](Tape&, const std::vector<Var>& x) { return x[0] * x[1]; }, 0});
  ops.push_back({"scale", {{"x", u(img)}}, [](Tape&, const std::vector<Var>& x) { return scale(x[0], -1.7); }, 0});
  ops.push_back({"mul_scalar", {{"x", u(img)}, {"s", u({1})}},
                 [](Tape&, const std::vector<Var>& x) { return mul_scalar(x[1], x[0]); }, 0});
  ops.push_back({"sum", {{"x", u(img)}}, [](Tape&, const std::vector<Var>& x) { return sum(x[0]); }, 0});
  ops.push_back({"dot", {{"a", u(img)}, {"b", u(img)}}, [](Tape&, const std::vector<Var>& x) { return dot(x[0], x[1]); }, 0});
  ops.push_back({"mean_abs_diff", {{"pred", away_from_zero(rng, img, 0.2, 1.0)}, {"target", Tensor(img)}},
                 [](Tape&, const std::vector<Var>& x) { return mean_abs_diff(x[0], x[1]); }});
  ops.push_back({"reshape", {{"x", u(img)}}, [](Tape&, const std::vector<Var>& x) { return reshape(x[0], {3, 36}); }, 0});

  ops.push_back({"relu", {{"x", away_from_zero(rng, img, 0.05, 1.0)}},
                 [](Tape&, const std::vector<Var>& x) { return relu(x[0]); }});
  ops.push_back({"gelu", {{"x", u(img)}}, [](Tape&, const std::vector<Var>& x) { return gelu(x[0]); }});
  ops.push_back({"sigmoid", {{"x", u(img)}}, [](Tape&, const std::vector<Var>& x) { return sigmoid(x[0]); }});
  ops.push_back({"softmax_rows", {{"x", u({4, 7})}}, [](Tape&, const std::vector<Var>& x) { return softmax_rows(x[0]); }});
  ops.push_back({"layer_norm", {{"x", u({4, 4, 5})}, {"weight", u({5})}, {"bias", u({5})}},
                 [](Tape&, const std::vector<Var>& x) { return layer_norm(x[0], x[1], x[2]); }});

  ops.push_back({"concat_channels", {{"a", u({4, 4, 2})}, {"b", u({4, 4, 3})}},
                 [](Tape&, const std::vector<Var>& x) { return concat_channels(std::vector<Var>{x[0], x[1]}); }, 1});
  ops.push_back({"slice_channels", {{"x", u({4, 4, 5})}},
                 [](Tape&, const std::vector<Var>& x) { return slice_channels(x[0], 1, 3); }, 0});
  ops.push_back({"interleave_channels", {{"a", u({4, 4, 3})}, {"b", u({4, 4, 3})}},
                 [](Tape&, const std::vector<Var>& x) { return interleave_channels(x[0], x[1]); }, 1});
  ops.push_back({"crop", {{"x", u({6, 7, 2})}}, [](Tape&, const std::vector<Var>& x) { return crop(x[0], 4, 5); }, 0});
  ops.push_back({"upsample_nearest", {{"x", u({3, 4, 2})}},
                 [](Tape&, const std::vector<Var>& x) { return upsample_nearest(x[0]); }, 0});

  const ConvSpec dense = ConvSpec::same(3, 4, 5);
  const ConvSpec grouped = ConvSpec::same(3, 4, 6, 2, 2);
  ops.push_back({"conv2d", {{"x", u({6, 6, 4})}, {"weight", conv_weight(rng, dense)}, {"bias", u({5})}},
                 [dense](Tape&, const std::vector<Var>& x) { return conv2d(x[0], dense, x[1], &x[2]); }, 0});
  ops.push_back({"conv2d_weight", {{"weight", conv_weight(rng, dense)}, {"x", u({6, 6, 4})}},
                 [dense](Tape&, const std::vector<Var>& x) { return conv2d(x[1], dense, x[0], nullptr); }, 0});
  ops.push_back({"conv2d_grouped_stride2", {{"x", u({6, 6, 4})}, {"weight", conv_weight(rng, grouped)}, {"bias", u({6})}},
                 [grouped](Tape&, const std::vector<Var>& x) { return conv2d(x[0], grouped, x[1], &x[2]); }, 0});

  ops.push_back({"window_partition", {{"x", u({8, 4, 3})}},
                 [](Tape&, const std::vector<Var>& x) { return window_partition(x[0], 2); }, 0});
  ops.push_back({"window_merge", {{"w", u({8, 4, 3})}},
                 [](Tape&, const std::vector<Var>& x) { return window_merge(x[0], 8, 4); }, 0});
  ops.push_back({"attn_scores", {{"q", u({2, 9, 4})}, {"k", u({2, 9, 4})}},
                 [](Tape&, const std::vector<Var>& x) { return attn_scores(x[0], x[1], 2, 0.7); }, 0});
  ops.push_back({"add_rel_bias", {{"table", u({2, 25})}, {"scores", u({2, 2, 9, 9})}},
                 [](Tape&, const std::vector<Var>& x) { return add_rel_bias(x[1], x[0], 3); }});
  ops.push_back({"add_rel_bias_table", {{"table", u({2, 25})}, {"scores", Tensor({2, 2, 9, 9})}},
                 [](Tape&, const std::vector<Var>& x) { return add_rel_bias(x[1], x[0], 3); }, 0});
  ops.push_back({"attn_apply", {{"v", u({2, 9, 4})}, {"probs", softmax_probe(rng, {2, 2, 9, 9})}},
                 [](Tape&, const std::vector<Var>& x) { return attn_apply(x[1], x[0], 2); }, 0});

  ops.push_back({"haar_dwt", {{"x", u({6, 4, 2})}}, [](Tape&, const std::vector<Var>& x) { return haar_dwt_packed(x[0]); }, 0});
  ops.push_back({"haar_idwt", {{"packed", u({3, 2, 8})}},
                 [](Tape&, const std::vector<Var>& x) { return haar_idwt_packed(x[0]); }, 0});

  ops.push_back({"fft2", {{"x", u({5, 6, 2})}}, [](Tape&, const std::vector<Var>& x) { return fft2(x[0]); }, 0});
  // Only conjugate-symmetric spectra are valid ifft2 inputs; probe through fft2.
  ops.push_back({"ifft2", {{"x", u({5, 6, 2})}, {"gate", u({5, 6, 2})}},
                 [](Tape&, const std::vector<Var>& x) {
                   return ifft2(mul_real(fft2(x[0]), symmetrize_spectrum(x[1])));
                 }});
  // Perturbing single bins would break the symmetry, so this one is adjoint-only.
  ops.push_back({"ifft2_adjoint", {{"spectrum", symmetric_pairs(rng, {4, 6, 2})}},
                 [](Tape&, const std::vector<Var>& x) { return ifft2(x[0]); }, 0, false});
  ops.push_back({"abs2", {{"z", u({4, 5, 2, 2})}}, [](Tape&, const std::vector<Var>& x) { return abs2(x[0]); }});
  ops.push_back({"real_to_complex", {{"x", u({4, 5, 2})}},
                 [](Tape&, const std::vector<Var>& x) { return real_to_complex(x[0]); }, 0});
  ops.push_back({"add_real", {{"z", u({4, 5, 2, 2})}, {"a", u({4, 5, 2})}},
                 [](Tape&, const std::vector<Var>& x) { return add_real(x[0], x[1]); }});
  ops.push_back({"add_real_a", {{"a", u({4, 5, 2})}, {"z", Tensor({4, 5, 2, 2})}},
                 [](Tape&, const std::vector<Var>& x) { return add_real(x[1], x[0]); }, 0});
  ops.push_back({"mul_real", {{"z", u({4, 5, 2, 2})}, {"gate", u({4, 5, 2})}},
                 [](Tape&, const std::vector<Var>& x) { return mul_real(x[0], x[1]); }, 0});
  ops.push_back({"mul_real_gate", {{"gate", u({4, 5, 2})}, {"z", u({4, 5, 2, 2})}},
                 [](Tape&, const std::vector<Var>& x) { return mul_real(x[1], x[0]); }, 0});
  {
    // Keep the probe inside the right half-plane, far from the branch cut.
    Tensor z = u({4, 5, 2, 2});
    for (std::size_t i = 0; i < z.size(); i += 2) z[i] = 0.5 + std::abs(z[i]);
    ops.push_back({"phase", {{"z", z}}, [](Tape&, const std::vector<Var>& x) { return phase(x[0]); }});
  }
  ops.push_back({"phase_similarity", {{"phi_t", u({4, 5, 2})}, {"phi_ref", u({4, 5, 2})}},
                 [](Tape&, const std::vector<Var>& x) { return phase_similarity(x[0], x[1]); }});
  ops.push_back({"symmetrize_spectrum", {{"w", u({5, 4, 2})}},
                 [](Tape&, const std::vector<Var>& x) { return symmetrize_spectrum(x[0]); }, 0});
  ops.push_back({"autocorrelation", {{"x", u({5, 6, 2})}},
                 [](Tape&, const std::vector<Var>& x) { return autocorrelation(x[0]); }});
  return ops;
}

CheckResult adjoint_check(const OpCase& c, std::uint64_t seed, double tolerance) {
  if (c.linear_in < 0) throw Error("adjoint_check: op '" + c.name + "' is not registered as linear");
  const auto li = static_cast<std::size_t>(c.linear_in);
  Rng rng(seed);

  Tape tape;
  std::vector<Var> inputs;
  for (std::size_t i = 0; i < c.inputs.size(); ++i) {
    inputs.push_back(i == li ? tape.leaf(c.inputs[i].value) : tape.constant(c.inputs[i].value));
  }
  const Var out = c.op(tape, inputs);
  const Tensor y = rng.uniform_tensor(out.shape(), -1.0, 1.0);

  // Fixed inputs may add an offset (affine ops); remove it by evaluating at zero.
  Tensor offset;
  {
    Tape zero_tape;
    std::vector<Var> zeroed;
    for (std::size_t i = 0; i < c.inputs.size(); ++i) {
      zeroed.push_back(zero_tape.constant(i == li ? Tensor(c.inputs[i].value.shape()) : c.inputs[i].value));
    }
    offset = c.op(zero_tape, zeroed).value();
  }
  const Var loss = dot(out, tape.constant(y));
  const Tensor adjoint_y = tape.backward(loss).of(inputs[li]);

  const double lhs = dot(out.value() - offset, y);
  const double rhs = dot(c.inputs[li].value, adjoint_y);
  CheckResult r;
  r.name = c.name;
  r.kind = "adjoint";
  r.error = std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs));
  r.tolerance = tolerance;
  r.passed = r.error < tolerance;
  return r;
}

CheckResult op_gradcheck(const OpCase& c, std::uint64_t seed, double tolerance) {
  Tensor w;
  {
    Tape tape;
    std::vector<Var> inputs;
    for (const auto& in : c.inputs) inputs.push_back(tape.constant(in.value));
    Rng rng(seed);
    w = rng.uniform_tensor(c.op(tape, inputs).shape(), -1.0, 1.0);
  }
  const ad::ScalarFn f = [&](Tape& tape, const std::vector<Var>& x) { return dot(c.op(tape, x), tape.constant(w)); };
  ad::GradcheckOptions options;
  options.tolerance = tolerance;
  options.seed = seed;
  const ad::GradReport report = ad::gradcheck(f, c.inputs, options);
  CheckResult r;
  r.name = c.name;
  r.kind = "gradcheck";
  r.error = report.max_rel_error();
  r.tolerance = tolerance;
  r.passed = report.all_passed();
  r.worst = worst_param(report);
  return r;
}

namespace {

template <class T>
ConvLayer<T> conv_from(const std::vector<T>& x, std::size_t& next, const ConvSpec& spec) {
  ConvLayer<T> layer{spec, x[next], T{}};
  ++next;
  if (spec.has_bias) layer.bias = x[next++];
  return layer;
}

}  // namespace

CheckResult wdam_block_gradcheck(std::uint64_t seed, double tolerance) {
  constexpr std::size_t c = 8, heads = 2, window = 4;
  const std::size_t hidden = affn_hidden(c, 2.66);
  const std::vector<std::pair<std::string, ConvSpec>> convs = {
      {"attn.q", ConvSpec::same(1, c, c)},
      {"attn.k", attn_projection_spec("k", c)},
      {"attn.v", ConvSpec::same(1, c, c)},
      {"attn.merge", ConvSpec::same(1, c, c)},
      {"attn.modulation", ConvSpec::same(3, 2 * c, c, c)},
      {"attn.high", ConvSpec::same(3, 3 * c, 3 * c)},
      {"attn.proj", ConvSpec::same(1, c, c)},
      {"ffn.expand", ConvSpec::same(1, c, 2 * hidden)},
      {"ffn.dwconv", ConvSpec::same(3, hidden, hidden, hidden)},
      {"ffn.project", ConvSpec::same(1, hidden, c)},
  };

  Rng rng(seed);
  std::vector<NamedTensor> params;
  params.push_back({"x", rng.uniform_tensor({16, 16, c}, -1.0, 1.0)});
  for (const auto& [name, spec] : convs) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(spec.weight_shape()[1] * spec.weight_shape()[2] *
                                                             spec.weight_shape()[3]));
    params.push_back({name + ".weight", rng.uniform_tensor(spec.weight_shape(), -bound, bound)});
    if (spec.has_bias) params.push_back({name + ".bias", rng.uniform_tensor({spec.out_channels}, -0.1, 0.1)});
  }
  params.push_back({"attn.rel_bias", rng.uniform_tensor({heads, (2 * window - 1) * (2 * window - 1)}, -0.5, 0.5)});
  params.push_back({"norm1.weight", rng.uniform_tensor({c}, 0.5, 1.5)});
  params.push_back({"norm1.bias", rng.uniform_tensor({c}, -0.2, 0.2)});
  params.push_back({"norm2.weight", rng.uniform_tensor({c}, 0.5, 1.5)});
  params.push_back({"norm2.bias", rng.uniform_tensor({c}, -0.2, 0.2)});
  params.push_back({"ffn.alpha", Tensor::scalar(0.05)});
  params.push_back({"ffn.beta", Tensor::scalar(-0.03)});
  const Tensor w = rng.uniform_tensor({16, 16, c}, -1.0, 1.0);

  const ad::ScalarFn f = [&](Tape& tape, const std::vector<Var>& x) {
    std::size_t next = 1;
    DecoderBlockParams<Var> p;
    p.attn.heads = heads;
    p.attn.window = window;
    p.attn.q = conv_from(x, next, convs[0].second);
    p.attn.k = conv_from(x, next, convs[1].second);
    p.attn.v = conv_from(x, next, convs[2].second);
    p.attn.merge = conv_from(x, next, convs[3].second);
    p.attn.modulation = conv_from(x, next, convs[4].second);
    p.attn.high = conv_from(x, next, convs[5].second);
    p.attn.proj = conv_from(x, next, convs[6].second);
    p.ffn.expand = conv_from(x, next, convs[7].second);
    p.ffn.dwconv = conv_from(x, next, convs[8].second);
    p.ffn.project = conv_from(x, next, convs[9].second);
    p.attn.rel_bias = x[next++];
    p.norm1 = {x[next], x[next + 1]};
    p.norm2 = {x[next + 2], x[next + 3]};
    p.ffn.alpha = x[next + 4];
    p.ffn.beta = x[next + 5];
    return dot(transformer_block(x[0], p), tape.constant(w));
  };

  ad::GradcheckOptions options;
  options.tolerance = tolerance;
  options.max_coords = 40;
  options.seed = seed;
  const ad::GradReport report = ad::gradcheck(f, params, options);
  return {"wdam_block", "block", report.max_rel_error(), tolerance, report.all_passed(), worst_param(report)};
}

// alpha and beta are randomized near 1e-6, so they get a smaller probe step.
constexpr double kSpectralStep = 1e-7;

ParamStore randomized_model(const ModelConfig& cfg, std::uint64_t seed, double scale) {
  ParamStore store = build_model(cfg, seed);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (auto& [name, t] : store) {
    const bool is_weight = name.ends_with(".weight") && t.rank() == 4;
    if (is_weight && !name.starts_with("head")) continue;
    const bool norm_gain = name.ends_with("norm1.weight") || name.ends_with("norm2.weight");
    for (auto& v : t.data()) v = norm_gain ? rng.uniform(0.7, 1.3) : rng.uniform(-scale, scale);
    // alpha and beta multiply the power spectrum, which grows with (HW)^2.
    if (name.ends_with(".alpha") || name.ends_with(".beta")) t[0] *= 1e-5;
  }
  return store;
}

namespace {

// Shifts the fusion bias per channel so every relu preactivation sits at least
// `margin` above zero for these frames.
void lift_fusion_bias(ParamStore& store, const ModelConfig& cfg, const Burst& frames, double margin) {
  const Model<Tensor> m = bind_model<Tensor>(cfg, [&](const std::string& name) { return store.at(name); });
  const std::size_t c0 = cfg.channels[0];
  const Tensor embedded = conv(m.embed, concat_channels(std::vector<Tensor>{frames.i0, frames.i1, frames.i2}));
  const Tensor x1 = slice_channels(embedded, c0, c0);
  PfmTrace<Tensor> trace;
  pfm_fuse(slice_channels(embedded, 0, c0), x1, slice_channels(embedded, 2 * c0, c0), m.pfm, cfg.phase_score, &trace);
  const Tensor pre = conv(m.pfm.fuse, concat_channels(std::vector<Tensor>{trace.enhanced0, x1, trace.enhanced2}));
  Tensor& bias = store.at("pfm.fuse.bias");
  for (std::size_t ch = 0; ch < c0; ++ch) {
    double lowest = pre[ch];
    for (std::size_t i = ch; i < pre.size(); i += c0) lowest = std::min(lowest, pre[i]);
    bias[ch] += margin - std::min(lowest, 0.0);
  }
}

}  // namespace

CheckResult network_gradcheck(std::uint64_t seed, double tolerance) {
  const ModelConfig cfg = ModelConfig::tiny();
  ParamStore store = randomized_model(cfg, seed);
  Rng rng(seed + 1);
  const Shape frame{32, 32, 3};
  const Tensor i0 = rng.uniform_tensor(frame, 0.0, 1.0);
  const Tensor i1 = rng.uniform_tensor(frame, 0.0, 1.0);
  const Tensor i2 = rng.uniform_tensor(frame, 0.0, 1.0);
  // Keep the probe away from both kinks: the fusion relu and |pred - gt|.
  lift_fusion_bias(store, cfg, {i0, i1, i2}, 0.1);
  Tensor gt = forward({i0, i1, i2}, store, cfg);
  for (auto& v : gt.data()) v += (rng.index(2) == 0 ? -1.0 : 1.0) * rng.uniform(0.1, 0.3);

  std::vector<NamedTensor> params;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& [name, t] : store) {
    index.emplace(name, params.size());
    params.push_back({name, t});
  }

  const ad::ScalarFn f = [&](Tape& tape, const std::vector<Var>& x) {
    const Model<Var> model = bind_model<Var>(cfg, [&](const std::string& name) { return x[index.at(name)]; });
    const Var r = forward_residual_core(model, cfg, tape.constant(i0), tape.constant(i1), tape.constant(i2));
    return mean_abs_diff(tape.constant(i1) + r, tape.constant(gt));
  };

  ad::GradcheckOptions options;
  options.tolerance = tolerance;
  options.seed = seed;
  options.directional = true;
  options.step_for = [](const std::string& name) {
    return name.ends_with(".alpha") || name.ends_with(".beta") ? kSpectralStep : 1e-5;
  };
  const ad::GradReport report = ad::gradcheck(f, params, options);
  return {"network_l1", "network", report.max_rel_error(), tolerance, report.all_passed(), worst_param(report)};
}

VerifyReport run_gradient_suite(bool full, std::uint64_t seed) {
  VerifyReport report;
  for (const OpCase& c : op_registry(seed)) {
    if (c.linear_in >= 0) report.checks.push_back(adjoint_check(c, seed));
    if (c.finite_difference) report.checks.push_back(op_gradcheck(c, seed));
  }
  if (full) {
    report.checks.push_back(wdam_block_gradcheck(seed));
    report.checks.push_back(network_gradcheck(seed));
  }
  return report;
}

}  // namespace flk
