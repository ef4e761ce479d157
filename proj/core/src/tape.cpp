#include <algorithm>
#include <cmath>

#include "flk/autodiff.hpp"
#include "flk/random.hpp"

namespace flk::ad {

const Tensor& Var::value() const {
  if (!tape_) throw Error("use of an unbound traced value");
  return tape_->value(id_);
}

const Tensor& BackwardContext::output() const { return tape_.nodes_[node_].value; }

const Tensor& BackwardContext::input(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].value;
}

bool BackwardContext::needs_grad(std::size_t i) const {
  return tape_.nodes_[tape_.nodes_[node_].inputs.at(i)].requires_grad;
}

Tensor& BackwardContext::grad(std::size_t i) {
  const NodeId id = tape_.nodes_[node_].inputs.at(i);
  Tensor& g = grads_[id];
  if (g.empty()) g = Tensor(tape_.nodes_[id].value.shape());
  return g;
}

void BackwardContext::accumulate(std::size_t i, const Tensor& g) {
  if (!needs_grad(i)) return;
  Tensor& slot = grad(i);
  if (slot.shape() != g.shape()) {
    throw ShapeError("backward of '" + tape_.nodes_[node_].op + "': gradient shape " + to_string(g.shape()) +
                     " does not match input " + to_string(slot.shape()));
  }
  for (std::size_t k = 0; k < g.size(); ++k) slot[k] += g[k];
}

bool Gradients::has(const Var& v) const {
  return v.tape() == tape_ && v.id() < grads_.size() && !grads_[v.id()].empty();
}

Tensor Gradients::of(const Var& v) const {
  if (v.tape() != tape_) throw Error("gradient requested for a value from another tape");
  if (has(v)) return grads_[v.id()];
  return Tensor(v.shape());
}

void Tape::check_owned(const Var& v, std::string_view op) const {
  if (v.tape() != this) {
    throw Error("traced op '" + std::string(op) + "': input belongs to a different tape (cross-tape mixing)");
  }
}

Var Tape::leaf(Tensor value) {
  nodes_.push_back({"leaf", std::move(value), {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back({"constant", std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  Node node;
  node.op = std::string(op);
  node.value = std::move(value);
  for (const auto& in : inputs) {
    check_owned(in, op);
    node.inputs.push_back(in.id());
    node.requires_grad = node.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& loss) {
  check_owned(loss, "backward");
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be a scalar, got shape " + to_string(loss.shape()));
  }
  if (!nodes_[loss.id()].requires_grad) {
    throw Error("backward: loss does not depend on any differentiable leaf (detached graph)");
  }
  Gradients out;
  out.tape_ = this;
  out.grads_.resize(loss.id() + 1);
  out.grads_[loss.id()] = Tensor(loss.shape(), 1.0);

  for (NodeId id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (out.grads_[id].empty() || !node.backward) continue;
    // Interior gradients are released once propagated; leaves keep theirs.
    const Tensor grad_out = std::move(out.grads_[id]);
    BackwardContext ctx(*this, id, grad_out, out.grads_);
    node.backward(ctx);
  }
  return out;
}

// ---------------------------------------------------------------------------

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

bool GradReport::all_passed() const {
  return std::all_of(params.begin(), params.end(), [](const ParamCheck& p) { return p.passed; });
}

double GradReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& p : params) m = std::max(m, p.max_rel_error);
  return m;
}

GradReport gradcheck(const ScalarFn& f, const std::vector<NamedTensor>& params, const GradcheckOptions& options) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& p : params) leaves.push_back(tape.leaf(p.value));
    const Var loss = f(tape, leaves);
    const Gradients grads = tape.backward(loss);
    for (const auto& leaf : leaves) analytic.push_back(grads.of(leaf));
  }

  auto evaluate = [&](const std::vector<Tensor>& values) {
    Tape tape;
    std::vector<Var> leaves;
    for (const auto& v : values) leaves.push_back(tape.leaf(v));
    return f(tape, leaves).value().item();
  };

  GradReport report;
  report.step = options.step;
  report.tolerance = options.tolerance;
  Rng rng(options.seed);
  std::vector<Tensor> values;
  for (const auto& p : params) values.push_back(p.value);

  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const double h = options.step_for ? options.step_for(params[pi].name) : options.step;
    if (options.directional) {
      const Tensor original = values[pi];
      Tensor direction(original.shape());
      for (auto& v : direction.data()) v = rng.index(2) == 0 ? -1.0 : 1.0;
      double predicted = 0.0;
      for (std::size_t i = 0; i < direction.size(); ++i) predicted += analytic[pi][i] * direction[i];
      for (std::size_t i = 0; i < direction.size(); ++i) values[pi][i] = original[i] + h * direction[i];
      const double up = evaluate(values);
      for (std::size_t i = 0; i < direction.size(); ++i) values[pi][i] = original[i] - h * direction[i];
      const double down = evaluate(values);
      values[pi] = original;
      ParamCheck check;
      check.name = params[pi].name;
      check.coords_checked = direction.size();
      check.max_rel_error = relative_error(predicted, (up - down) / (2.0 * h));
      check.passed = check.max_rel_error < options.tolerance;
      report.params.push_back(std::move(check));
      continue;
    }
    const std::size_t n = values[pi].size();
    std::vector<std::size_t> coords(n);
    for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    if (n > options.max_coords) {
      // Partial Fisher-Yates: the first max_coords entries are a uniform sample.
      for (std::size_t i = 0; i < options.max_coords; ++i) std::swap(coords[i], coords[i + rng.index(n - i)]);
      coords.resize(options.max_coords);
    }
    ParamCheck check;
    check.name = params[pi].name;
    for (std::size_t c : coords) {
      const double original = values[pi][c];
      values[pi][c] = original + h;
      const double up = evaluate(values);
      values[pi][c] = original - h;
      const double down = evaluate(values);
      values[pi][c] = original;
      const double numeric = (up - down) / (2.0 * h);
      check.max_rel_error = std::max(check.max_rel_error, relative_error(analytic[pi][c], numeric));
      ++check.coords_checked;
    }
    check.passed = check.max_rel_error < options.tolerance;
    report.params.push_back(std::move(check));
  }
  return report;
}

}  // namespace flk::ad
