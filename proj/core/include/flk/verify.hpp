#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "flk/autodiff.hpp"
#include "flk/network.hpp"

// Gradient verification suite: dot-product adjoint tests for linear ops,
// finite-difference checks per op, one decoder block and the full network.

namespace flk {

struct CheckResult {
  std::string name;
  std::string kind;  // "adjoint", "gradcheck", "block", "network"
  double error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string worst;  // parameter with the largest error, when several are checked
};

struct VerifyReport {
  std::vector<CheckResult> checks;

  bool all_passed() const;
  std::size_t failures() const;
  void append(const VerifyReport& other);
};

using OpFn = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

/// A differentiable op together with a smooth probe point.
struct OpCase {
  std::string name;
  std::vector<ad::NamedTensor> inputs;
  OpFn op;
  /// Index of an input the op is linear in, or -1. Other inputs are held fixed
  /// for the adjoint test.
  int linear_in = -1;
  bool finite_difference = true;
};

/// Every traced op with a random probe point drawn from `seed`.
std::vector<OpCase> op_registry(std::uint64_t seed);

/// <L x, y> against <x, L^T y> with L^T taken from the backward pass.
CheckResult adjoint_check(const OpCase& c, std::uint64_t seed, double tolerance = 1e-9);
/// Central differences on <op(inputs), w> for a fixed random w.
CheckResult op_gradcheck(const OpCase& c, std::uint64_t seed, double tolerance = 1e-4);

/// Transformer block with WDAM attention on a 16 x 16 x 8 feature.
CheckResult wdam_block_gradcheck(std::uint64_t seed, double tolerance = 1e-4);
/// L1 loss of the full network with channels [8, 16, 24], window 4, on 32 x 32
/// frames, probed along one random direction per parameter tensor.
CheckResult network_gradcheck(std::uint64_t seed, double tolerance = 1e-3);

/// Adjoint and op checks; `full` adds the block and network checks.
VerifyReport run_gradient_suite(bool full, std::uint64_t seed = 7);

/// Random parameters with every scalar nonzero so all paths carry gradient.
ParamStore randomized_model(const ModelConfig& cfg, std::uint64_t seed, double scale = 0.3);

}  // namespace flk
