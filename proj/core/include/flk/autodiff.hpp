#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flk/spectral.hpp"
#include "flk/tensor.hpp"

// Tape-based reverse-mode differentiation.
//
// Every traced operation records one node holding its forward value, its
// input node ids and a backward closure. Node ids are assigned in recording
// order, so inputs always precede outputs and a single reverse sweep visits
// each node once. Complex intermediates travel as real tensors with a
// trailing (re, im) axis of size 2.

namespace flk::ad {

class Tape;
using NodeId = std::size_t;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;

  Tape* tape() const noexcept { return tape_; }
  NodeId id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  friend class Tape;
  Var(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

class BackwardContext {
 public:
  const Tensor& grad_out() const { return *grad_out_; }
  const Tensor& output() const;
  const Tensor& input(std::size_t i) const;
  bool needs_grad(std::size_t i) const;
  /// Gradient slot of input i, zero-initialised on first access.
  Tensor& grad(std::size_t i);
  void accumulate(std::size_t i, const Tensor& g);

 private:
  friend class Tape;
  BackwardContext(Tape& tape, NodeId node, const Tensor& grad_out, std::vector<Tensor>& grads)
      : tape_(tape), node_(node), grad_out_(&grad_out), grads_(grads) {}

  Tape& tape_;
  NodeId node_;
  const Tensor* grad_out_;
  std::vector<Tensor>& grads_;
};

using BackwardFn = std::function<void(BackwardContext&)>;

/// Gradients of a scalar with respect to every node that influences it.
class Gradients {
 public:
  bool has(const Var& v) const;
  /// Zero tensor of the right shape when v did not influence the loss.
  Tensor of(const Var& v) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<Tensor> grads_;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input.
  Var leaf(Tensor value);
  /// Non-differentiable input.
  Var constant(Tensor value);
  /// Records an operation. Inputs must live on this tape.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor& value(NodeId id) const { return nodes_.at(id).value; }
  std::string_view op_name(NodeId id) const { return nodes_.at(id).op; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }

  /// Reverse accumulation from a scalar loss.
  Gradients backward(const Var& loss);

 private:
  friend class BackwardContext;
  struct Node {
    std::string op;
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  void check_owned(const Var& v, std::string_view op) const;

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Traced operations. Names and semantics mirror the eager functions in
// namespace flk so block code can be written once for both.

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var mul_scalar(const Var& s, const Var& x);
inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

Var sum(const Var& x);
Var dot(const Var& a, const Var& b);
Var mean_abs_diff(const Var& pred, const Var& target);
Var reshape(const Var& x, Shape shape);

Var relu(const Var& x);
Var gelu(const Var& x);
Var sigmoid(const Var& x);
Var softmax_rows(const Var& x);
Var layer_norm(const Var& x, const Var& weight, const Var& bias);

Var concat_channels(const std::vector<Var>& parts);
Var slice_channels(const Var& x, std::size_t begin, std::size_t count);
Var interleave_channels(const Var& a, const Var& b);
Var crop(const Var& x, std::size_t h, std::size_t w);

Var conv2d(const Var& x, const ConvSpec& spec, const Var& weight, const Var* bias);
Var upsample_nearest(const Var& x);

Var window_partition(const Var& x, std::size_t window);
Var window_merge(const Var& windows, std::size_t h, std::size_t w);
Var attn_scores(const Var& q, const Var& k, std::size_t heads, double scale);
Var add_rel_bias(const Var& scores, const Var& table, std::size_t window);
Var attn_apply(const Var& probs, const Var& v, std::size_t heads);

Var haar_dwt_packed(const Var& x);
Var haar_idwt_packed(const Var& packed);

// Spectral ops; complex values are H x W x C x 2.
Var fft2(const Var& x);
Var ifft2(const Var& spectrum);
Var abs2(const Var& spectrum);
Var real_to_complex(const Var& x);
Var add_real(const Var& spectrum, const Var& a);
Var mul_real(const Var& spectrum, const Var& gate);
Var phase(const Var& spectrum);
Var phase_similarity(const Var& phase_t, const Var& phase_ref, PhaseScore score = PhaseScore::kCosine);
Var symmetrize_spectrum(const Var& w);
Var autocorrelation(const Var& x);

// ---------------------------------------------------------------------------
// Finite-difference verification.

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct ParamCheck {
  std::string name;
  std::size_t coords_checked = 0;
  double max_rel_error = 0.0;
  bool passed = false;
};

struct GradReport {
  double step = 0.0;
  double tolerance = 0.0;
  std::vector<ParamCheck> params;

  bool all_passed() const;
  double max_rel_error() const;
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t max_coords = 200;
  std::uint64_t seed = 0;
  /// Probe each parameter once along a random +-1 direction over all of its
  /// coordinates instead of coordinate by coordinate.
  bool directional = false;
  /// Per-parameter step override; `step` is used when empty.
  std::function<double(const std::string&)> step_for;
};

/// Compares reverse-mode gradients against central differences on a random
/// subsample of at most `max_coords` coordinates per parameter, or along one
/// random direction per parameter.
GradReport gradcheck(const ScalarFn& f, const std::vector<NamedTensor>& params, const GradcheckOptions& options = {});

}  // namespace flk::ad
