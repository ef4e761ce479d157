#include <cmath>

#include <gtest/gtest.h>

#include "flk/tensor.hpp"
#include "test_util.hpp"

namespace flk {
namespace {

using test::random_tensor;

TEST(Tensor, ShapeProductMatchesStorage) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24u);
  EXPECT_THROW(Tensor({2, 0, 3}), ShapeError);
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>(3)), ShapeError);
}

TEST(Conv2d, IdentityOneByOne) {
  const Tensor x = random_tensor({5, 4, 3}, 1);
  ConvSpec s = ConvSpec::same(1, 3, 3);
  Tensor w(s.weight_shape());
  for (std::size_t c = 0; c < 3; ++c) w[c * 3 + c] = 1.0;
  const Tensor zero({3});
  EXPECT_EQ(conv2d(x, s, w, &zero), x);
}

TEST(Conv2d, DepthwiseOnesCentre) {
  const Tensor x({3, 3, 1}, 1.0);
  const ConvSpec s = ConvSpec::same(3, 1, 1, 1);
  const Tensor w(s.weight_shape(), 1.0);
  const Tensor y = conv2d(x, s, w, nullptr);
  EXPECT_DOUBLE_EQ(y.at(1, 1, 0), 9.0);
  EXPECT_DOUBLE_EQ(y.at(0, 0, 0), 4.0);
}

TEST(Conv2d, MatchesNaiveLoop) {
  const Tensor x = random_tensor({5, 5, 2}, 2);
  for (std::size_t groups : {1u, 2u}) {
    const ConvSpec s = ConvSpec::same(3, 2, 4, groups);
    const Tensor w = random_tensor(s.weight_shape(), 3);
    const Tensor b = random_tensor({4}, 4);
    EXPECT_LT(max_abs_diff(conv2d(x, s, w, &b), test::naive_conv2d(x, s, w, &b)), 1e-12) << "groups " << groups;
  }
}

TEST(Conv2d, StridedAndDepthwiseMatchNaive) {
  const Tensor x = random_tensor({8, 6, 4}, 5);
  const ConvSpec strided = ConvSpec::same(3, 4, 3, 1, 2);
  const Tensor ws = random_tensor(strided.weight_shape(), 6);
  EXPECT_LT(max_abs_diff(conv2d(x, strided, ws, nullptr), test::naive_conv2d(x, strided, ws, nullptr)), 1e-12);
  const ConvSpec dw = ConvSpec::same(3, 4, 4, 4);
  const Tensor wd = random_tensor(dw.weight_shape(), 7);
  EXPECT_LT(max_abs_diff(conv2d(x, dw, wd, nullptr), test::naive_conv2d(x, dw, wd, nullptr)), 1e-12);
}

TEST(Conv2d, LinearInInput) {
  const ConvSpec s = ConvSpec::same(3, 3, 5);
  const Tensor w = random_tensor(s.weight_shape(), 8);
  const Tensor x = random_tensor({6, 7, 3}, 9), y = random_tensor({6, 7, 3}, 10);
  const double a = 0.7, b = -1.3;
  const Tensor lhs = conv2d(scale(x, a) + scale(y, b), s, w, nullptr);
  const Tensor rhs = scale(conv2d(x, s, w, nullptr), a) + scale(conv2d(y, s, w, nullptr), b);
  EXPECT_LT(max_abs_diff(lhs, rhs), 1e-12);
}

TEST(Conv2d, RejectsMismatchedWeights) {
  const ConvSpec s = ConvSpec::same(3, 3, 5);
  EXPECT_THROW(conv2d(Tensor({4, 4, 3}), s, Tensor({5, 3, 3, 2}), nullptr), ShapeError);
  EXPECT_THROW(conv2d(Tensor({4, 4, 2}), s, Tensor(s.weight_shape()), nullptr), ShapeError);
  EXPECT_THROW(ConvSpec::same(3, 3, 4, 2), ShapeError);
}

TEST(Window, PartitionSingleWindowRowMajor) {
  Tensor x({8, 8, 1});
  for (std::size_t i = 0; i < 64; ++i) x[i] = static_cast<double>(i);
  const Tensor w = window_partition(x, 8);
  EXPECT_EQ(w.shape(), (Shape{1, 64, 1}));
  for (std::size_t i = 0; i < 64; ++i) EXPECT_EQ(w[i], static_cast<double>(i));
}

TEST(Window, PartitionFirstWindow) {
  Tensor x({4, 4, 1});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) x.at(i, j, 0) = static_cast<double>(4 * i + j);
  const Tensor w = window_partition(x, 2);
  EXPECT_EQ(w.shape(), (Shape{4, 4, 1}));
  EXPECT_EQ((std::vector<double>{w[0], w[1], w[2], w[3]}), (std::vector<double>{0, 1, 4, 5}));
  EXPECT_EQ(window_merge(w, 4, 4), x);
}

TEST(Window, RoundtripIsIdentity) {
  for (std::size_t m : {1u, 2u, 4u, 8u}) {
    const Tensor x = random_tensor({16, 8, 3}, 11 + m);
    EXPECT_EQ(window_merge(window_partition(x, m), 16, 8), x);
  }
}

TEST(Window, RejectsIndivisible) {
  EXPECT_THROW(window_partition(Tensor({6, 8, 1}), 4), ShapeError);
  EXPECT_THROW(window_merge(Tensor({3, 16, 1}), 8, 8), ShapeError);
}

TEST(Resample, Shapes) {
  const ConvSpec down = ConvSpec::same(3, 2, 5, 1, 2);
  const Tensor y = downsample(random_tensor({8, 8, 2}, 12), down, Tensor(down.weight_shape()), Tensor({5}));
  EXPECT_EQ(y.shape(), (Shape{4, 4, 5}));
  EXPECT_THROW(downsample(Tensor({7, 8, 2}), down, Tensor(down.weight_shape()), Tensor({5})), ShapeError);
  const ConvSpec up = ConvSpec::same(3, 4, 3);
  const Tensor z = upsample(random_tensor({4, 4, 4}, 13), up, Tensor(up.weight_shape()), Tensor({3}));
  EXPECT_EQ(z.shape(), (Shape{8, 8, 3}));
}

TEST(Resample, NearestStage) {
  const Tensor x({2, 2, 1}, std::vector<double>{1, 2, 3, 4});
  const Tensor y = upsample_nearest(x);
  const std::vector<double> expected{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  EXPECT_EQ(y, Tensor({4, 4, 1}, expected));
}

TEST(Activations, Definitions) {
  EXPECT_DOUBLE_EQ(sigmoid(Tensor({1}, 0.0))[0], 0.5);
  const Tensor sm = softmax_rows(Tensor({1, 4}, 3.0));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(sm[i], 0.25);
  const Tensor r = relu(Tensor({3}, std::vector<double>{-1.0, 0.0, 2.0}));
  EXPECT_EQ(r, Tensor({3}, std::vector<double>{0.0, 0.0, 2.0}));
}

TEST(Activations, GeluMatchesErfForm) {
  const Tensor x = random_tensor({257}, 14, -6.0, 6.0);
  const Tensor y = gelu(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double xi = x[i];
    const long double ref = 0.5L * xi * (1.0L + std::erf(xi / std::sqrt(2.0L)));
    EXPECT_NEAR(y[i], static_cast<double>(ref), 1e-10);
  }
}

TEST(Activations, SoftmaxRowsSumToOneAndShiftInvariant) {
  const Tensor x = random_tensor({9, 13}, 15, -20.0, 20.0);
  const Tensor p = softmax_rows(x);
  Tensor shifted = x;
  for (std::size_t r = 0; r < 9; ++r)
    for (std::size_t c = 0; c < 13; ++c) shifted[r * 13 + c] += static_cast<double>(r) * 3.5 - 7.0;
  const Tensor q = softmax_rows(shifted);
  for (std::size_t r = 0; r < 9; ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 13; ++c) total += p[r * 13 + c];
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  EXPECT_LT(max_abs_diff(p, q), 1e-12);
}

TEST(LayerNorm, ConstantChannelsGiveBias) {
  const Tensor x({3, 3, 4}, 2.5);
  const Tensor w = random_tensor({4}, 16), b = random_tensor({4}, 17);
  const Tensor y = layer_norm(x, w, b);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], b[i % 4], 1e-12);
}

TEST(Padding, ReflectThenCropIsIdentity) {
  const Tensor x = random_tensor({5, 7, 2}, 18);
  const Tensor p = reflect_pad(x, 8, 8);
  EXPECT_EQ(p.shape(), (Shape{8, 8, 2}));
  EXPECT_EQ(crop(p, 5, 7), x);
  // Mirror without repeating the edge: row 5 copies row 3.
  EXPECT_EQ(p.at(5, 0, 1), x.at(3, 0, 1));
  EXPECT_EQ(p.at(0, 7, 0), x.at(0, 5, 0));
}

TEST(Channels, ConcatSliceInterleave) {
  const Tensor a = random_tensor({2, 3, 2}, 19), b = random_tensor({2, 3, 2}, 20);
  const Tensor cat = concat_channels({a, b});
  EXPECT_EQ(slice_channels(cat, 0, 2), a);
  EXPECT_EQ(slice_channels(cat, 2, 2), b);
  const auto [a2, b2] = deinterleave_channels(interleave_channels(a, b));
  EXPECT_EQ(a2, a);
  EXPECT_EQ(b2, b);
  EXPECT_EQ(transpose_hw(transpose_hw(a)), a);
}

}  // namespace
}  // namespace flk
