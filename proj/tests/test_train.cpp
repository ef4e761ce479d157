#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "flk/train.hpp"
#include "test_util.hpp"

namespace flk {
namespace {

using test::random_tensor;

TEST(L1, Examples) {
  const Tensor a = random_tensor({4, 5, 3}, 1);
  EXPECT_EQ(l1_loss(a, a), 0.0);
  EXPECT_NEAR(l1_loss(Tensor({3, 3, 3}, 0.4), Tensor({3, 3, 3}, 0.5)), 0.1, 1e-15);
  const Tensor b = random_tensor({4, 5, 3}, 2);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  EXPECT_NEAR(l1_loss(a, b), s / static_cast<double>(a.size()), 1e-12);
  EXPECT_THROW(l1_loss(a, Tensor({4, 5, 1})), ShapeError);
}

TEST(Psnr, Examples) {
  const Tensor a = random_tensor({8, 8, 3}, 3, 0.0, 1.0);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_GT(psnr(a, a), 0.0);
  EXPECT_NEAR(psnr(Tensor({4, 4, 3}, 0.2), Tensor({4, 4, 3}, 0.3)), 20.0, 1e-9);
  const Tensor b = random_tensor({8, 8, 3}, 4, 0.0, 1.0);
  EXPECT_DOUBLE_EQ(psnr(a, b), psnr(b, a));
  EXPECT_EQ(format_metric(psnr(a, a)), "inf");
}

// Sliding-window SSIM written directly from the definition.
double ssim_oracle(const Tensor& a, const Tensor& b) {
  const Tensor x = luminance(a), y = luminance(b);
  const std::size_t h = x.dim(0), w = x.dim(1);
  double g[11][11], total = 0.0;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) total += g[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t oy = 0; oy + 11 <= h; ++oy)
    for (std::size_t ox = 0; ox + 11 <= w; ++ox) {
      double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
      for (int i = 0; i < 11; ++i)
        for (int j = 0; j < 11; ++j) {
          const double wt = g[i][j] / total, u = x.at(oy + i, ox + j, 0), v = y.at(oy + i, ox + j, 0);
          mx += wt * u;
          my += wt * v;
          sxx += wt * u * u;
          syy += wt * v * v;
          sxy += wt * u * v;
        }
      sxx -= mx * mx;
      syy -= my * my;
      sxy -= mx * my;
      sum += ((2 * mx * my + c1) * (2 * sxy + c2)) / ((mx * mx + my * my + c1) * (sxx + syy + c2));
      ++count;
    }
  return sum / static_cast<double>(count);
}

TEST(Ssim, Examples) {
  const Tensor a = random_tensor({20, 24, 3}, 5, 0.0, 1.0);
  EXPECT_NEAR(ssim(a, a), 1.0, 1e-12);
  const Tensor b = random_tensor({20, 24, 3}, 6, 0.0, 1.0);
  EXPECT_NEAR(ssim(a, b), ssim_oracle(a, b), 1e-9);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-12);
  EXPECT_LT(ssim(a, b), 0.5);
}

TEST(Luminance, Rec601) {
  const Tensor px({1, 1, 3}, std::vector<double>{1.0, 0.5, 0.25});
  EXPECT_NEAR(luminance(px)[0], 0.299 + 0.587 * 0.5 + 0.114 * 0.25, 1e-15);
}

TEST(Adam, FirstStepMovesByLr) {
  ParamStore p, g;
  p.add("x", Tensor({1}, 0.5));
  g.add("x", Tensor({1}, 1.0));
  AdamState s;
  adam_step(p, g, s);
  EXPECT_NEAR(p.at("x")[0], 0.5 - 1e-4, 1e-11);
}

TEST(Adam, ZeroGradientAndZeroRate) {
  ParamStore p, g;
  p.add("x", Tensor({2}, std::vector<double>{1.0, -2.0}));
  g.add("x", Tensor({2}, std::vector<double>{0.3, -0.7}));
  AdamState s;
  adam_step(p, g, s);
  const Tensor after = p.at("x");
  const double m = s.m.at("x")[0];
  g.at("x") = Tensor({2});
  adam_step(p, g, s);
  EXPECT_NEAR(s.m.at("x")[0], 0.9 * m, 1e-15);
  AdamState frozen;
  frozen.options.lr = 0.0;
  ParamStore q = p;
  g.at("x") = Tensor({2}, 1.0);
  adam_step(q, g, frozen);
  EXPECT_EQ(q, p);
  EXPECT_NE(after, Tensor({2}, std::vector<double>{1.0, -2.0}));
}

TEST(Adam, MatchesReferenceLoopOnQuadratic) {
  ParamStore p;
  p.add("x", Tensor({1}, 1.0));
  AdamState s;
  s.options.lr = 0.1;
  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 100; ++t) {
    ParamStore g;
    g.add("x", Tensor({1}, 2.0 * p.at("x")[0]));
    adam_step(p, g, s);
    const double grad = 2.0 * x;
    m = 0.9 * m + 0.1 * grad;
    v = 0.999 * v + 0.001 * grad * grad;
    x -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  EXPECT_NEAR(p.at("x")[0], x, 1e-12);
  EXPECT_LT(std::abs(x), 0.05);
}

TEST(Adam, ShapeMismatch) {
  ParamStore p, g;
  p.add("x", Tensor({2}));
  g.add("x", Tensor({3}));
  AdamState s;
  EXPECT_THROW(adam_step(p, g, s), ShapeError);
}

BurstTriplet small_burst() {
  FlickerParams fp;
  fp.row_readout_time = 400e-6;
  return synth_burst(synthetic_scene(32, 32, 2), fp, 0);
}

TEST(Train, ZeroStepsKeepsInputPsnr) {
  const BurstTriplet b = small_burst();
  TrainOptions o;
  o.steps = 0;
  const TrainResult r = train_overfit(b, ModelConfig::tiny(), o);
  ASSERT_EQ(r.psnr.size(), 1u);
  EXPECT_EQ(r.psnr[0], psnr(b.i1, b.gt));
  EXPECT_EQ(r.loss[0], l1_loss(b.i1, b.gt));
}

TEST(Train, DeterministicAndDecreasing) {
  const BurstTriplet b = small_burst();
  TrainOptions o;
  o.steps = 50;
  o.seed = 3;
  const TrainResult r1 = train_overfit(b, ModelConfig::tiny(), o);
  const TrainResult r2 = train_overfit(b, ModelConfig::tiny(), o);
  ASSERT_EQ(r1.loss.size(), 51u);
  EXPECT_EQ(r1.loss, r2.loss);
  EXPECT_EQ(r1.params, r2.params);
  EXPECT_LT(r1.loss.back(), r1.loss.front());
  for (double v : r1.loss) EXPECT_TRUE(std::isfinite(v));
}

TEST(Train, CurvesCsv) {
  TrainResult r;
  r.loss = {0.5, 0.25};
  r.psnr = {10.0, INFINITY};
  const auto path = std::filesystem::temp_directory_path() / "flk_curves_test.csv";
  write_curves_csv(r, path);
  std::ifstream in(path);
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  EXPECT_EQ(header, "step,l1,psnr");
  EXPECT_EQ(first.substr(0, 2), "0,");
  EXPECT_NE(second.find("inf"), std::string::npos);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace flk
