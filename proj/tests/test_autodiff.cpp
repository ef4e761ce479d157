#include <algorithm>
#include <cctype>
#include <cmath>

#include <gtest/gtest.h>

#include "flk/autodiff.hpp"
#include "flk/verify.hpp"
#include "test_util.hpp"

namespace flk {
namespace {

using test::random_tensor;

TEST(Tape, ProductRule) {
  ad::Tape tape;
  const ad::Var a = tape.leaf(Tensor({3}, std::vector<double>{1, 2, 3}));
  const ad::Var b = tape.leaf(Tensor({3}, std::vector<double>{4, 5, 6}));
  const ad::Var loss = ad::sum(a * b + a);
  EXPECT_DOUBLE_EQ(loss.value()[0], 4 + 10 + 18 + 6.0);
  const ad::Gradients g = tape.backward(loss);
  EXPECT_EQ(g.of(a), Tensor({3}, std::vector<double>{5, 6, 7}));
  EXPECT_EQ(g.of(b), Tensor({3}, std::vector<double>{1, 2, 3}));
}

TEST(Tape, SharedSubexpressionAccumulates) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(Tensor({1}, 3.0));
  const ad::Var y = x * x;
  const ad::Gradients g = tape.backward(ad::sum(y + y));
  EXPECT_DOUBLE_EQ(g.of(x)[0], 12.0);
}

TEST(Tape, ConstantsGetNoGradient) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(Tensor({2}, 1.0));
  const ad::Var c = tape.constant(Tensor({2}, 2.0));
  const ad::Var unused = tape.leaf(Tensor({2}, 5.0));
  const ad::Gradients g = tape.backward(ad::sum(x * c));
  EXPECT_FALSE(g.has(c));
  EXPECT_EQ(g.of(unused), Tensor({2}));
}

TEST(Tape, BackwardNeedsScalar) {
  ad::Tape tape;
  const ad::Var x = tape.leaf(Tensor({2}, 1.0));
  EXPECT_THROW(tape.backward(x), ShapeError);
}

TEST(Tape, MixingTapesIsRejected) {
  ad::Tape t1, t2;
  const ad::Var a = t1.leaf(Tensor({1}, 1.0));
  const ad::Var b = t2.leaf(Tensor({1}, 1.0));
  EXPECT_ANY_THROW(ad::add(a, b));
}

TEST(Tape, L1Gradient) {
  ad::Tape tape;
  const ad::Var p = tape.leaf(Tensor({4}, std::vector<double>{0.5, -1.0, 2.0, 0.0}));
  const ad::Var t = tape.constant(Tensor({4}, std::vector<double>{0.0, 0.0, 3.0, 1.0}));
  const ad::Var loss = ad::mean_abs_diff(p, t);
  EXPECT_DOUBLE_EQ(loss.value()[0], (0.5 + 1.0 + 1.0 + 1.0) / 4);
  EXPECT_EQ(tape.backward(loss).of(p), Tensor({4}, std::vector<double>{0.25, -0.25, -0.25, -0.25}));
}

TEST(Gradcheck, CatchesWrongBackward) {
  // A square whose backward is deliberately off by a factor of two.
  const ad::ScalarFn f = [](ad::Tape& tape, const std::vector<ad::Var>& in) {
    const ad::Var& x = in[0];
    Tensor v = x.value() * x.value();
    return ad::sum(tape.record("bad_square", std::move(v), {x}, [](ad::BackwardContext& ctx) {
      ctx.accumulate(0, ctx.grad_out() * ctx.input(0));
    }));
  };
  const auto report = ad::gradcheck(f, {{"x", random_tensor({5}, 1, 0.5, 1.0)}});
  EXPECT_FALSE(report.all_passed());
}

TEST(Gradcheck, DirectionalAgreesOnSmoothFunction) {
  const ad::ScalarFn f = [](ad::Tape&, const std::vector<ad::Var>& in) {
    return ad::sum(ad::gelu(in[0]) * ad::sigmoid(in[1]));
  };
  const std::vector<ad::NamedTensor> params{{"a", random_tensor({4, 4, 2}, 2)}, {"b", random_tensor({4, 4, 2}, 3)}};
  ad::GradcheckOptions opts;
  EXPECT_TRUE(ad::gradcheck(f, params, opts).all_passed());
  opts.directional = true;
  const auto report = ad::gradcheck(f, params, opts);
  EXPECT_TRUE(report.all_passed());
  EXPECT_EQ(report.params.size(), 2u);
}

TEST(RelativeError, Floor) {
  EXPECT_DOUBLE_EQ(ad::relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(ad::relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(ad::relative_error(1e-10, 0.0), 1e-10 / 1e-8);
}

class OpSuite : public ::testing::TestWithParam<std::size_t> {};

TEST_P(OpSuite, AdjointAndGradcheck) {
  const auto cases = op_registry(11);
  ASSERT_LT(GetParam(), cases.size());
  const OpCase& c = cases[GetParam()];
  if (c.linear_in >= 0) {
    const CheckResult r = adjoint_check(c, 12);
    EXPECT_TRUE(r.passed) << c.name << " adjoint error " << r.error;
  }
  if (c.finite_difference) {
    const CheckResult r = op_gradcheck(c, 13);
    EXPECT_TRUE(r.passed) << c.name << " gradcheck error " << r.error << " at " << r.worst;
  }
}

INSTANTIATE_TEST_SUITE_P(Registry, OpSuite, ::testing::Range<std::size_t>(0, op_registry(11).size()),
                         [](const ::testing::TestParamInfo<std::size_t>& info) {
                           std::string name = op_registry(11)[info.param].name;
                           for (char& ch : name)
                             if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
                           return name;
                         });

TEST(OpSuite, RegistryCoversSpectralOps) {
  std::vector<std::string> names;
  for (const auto& c : op_registry(1)) names.push_back(c.name);
  for (const char* expected : {"fft2", "ifft2", "abs2", "phase", "conv2d", "softmax_rows", "layer_norm",
                               "haar_dwt", "window_partition", "autocorrelation"}) {
    EXPECT_NE(std::find(names.begin(), names.end(), expected), names.end()) << expected;
  }
}

TEST(BlockGradcheck, Wdam) {
  const CheckResult r = wdam_block_gradcheck(5);
  EXPECT_TRUE(r.passed) << r.error << " at " << r.worst;
}

}  // namespace
}  // namespace flk
