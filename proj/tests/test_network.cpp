#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "flk/autodiff.hpp"
#include "flk/network.hpp"
#include "flk/train.hpp"
#include "flk/verify.hpp"
#include "test_util.hpp"

namespace flk {
namespace {

using test::random_tensor;

Burst random_burst(std::size_t h, std::size_t w, std::uint64_t seed) {
  return {random_tensor({h, w, 3}, seed, 0.0, 1.0), random_tensor({h, w, 3}, seed + 1, 0.0, 1.0),
          random_tensor({h, w, 3}, seed + 2, 0.0, 1.0)};
}

class TempDir {
 public:
  TempDir()
      : path_(std::filesystem::temp_directory_path() /
              (std::string("flk_test_") + ::testing::UnitTest::GetInstance()->current_test_info()->name())) {
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

TEST(ModelConfig, DefaultsAndValidation) {
  const ModelConfig cfg;
  EXPECT_EQ(cfg.size_multiple(), 64u);
  EXPECT_EQ(cfg.hidden(0), 86u);
  ModelConfig bad = cfg;
  bad.heads = {1, 3, 4};
  EXPECT_ANY_THROW(bad.validate());
  bad = cfg;
  bad.blocks = {2, 2};
  EXPECT_ANY_THROW(bad.validate());
}

TEST(Params, DefaultCountWithinAnchor) {
  const std::size_t n = build_model(ModelConfig{}, 0).scalar_count();
  EXPECT_GE(n, 3'100'000u);
  EXPECT_LE(n, 4'700'000u);
}

TEST(Params, CountMatchesShapes) {
  const ModelConfig cfg = ModelConfig::tiny();
  std::size_t expected = 0;
  for_each_param(cfg, [&](const std::string&, const Shape& s, ParamRole) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    expected += n;
  });
  const ParamStore p = build_model(cfg, 3);
  EXPECT_EQ(p.scalar_count(), expected);
  EXPECT_EQ(p.at("enc0.block0.ffn.alpha")[0], 0.0);
  EXPECT_EQ(p.at("enc0.block0.norm1.weight")[0], 1.0);
  for (double v : p.at("head.weight").data()) EXPECT_EQ(v, 0.0);
  EXPECT_FALSE(p.contains("enc0.block0.attn.k.bias"));
}

TEST(Params, BuildIsDeterministic) {
  EXPECT_EQ(build_model(ModelConfig::tiny(), 9), build_model(ModelConfig::tiny(), 9));
  EXPECT_FALSE(build_model(ModelConfig::tiny(), 9) == build_model(ModelConfig::tiny(), 10));
}

TEST(Forward, ZeroInitReturnsMiddleFrame) {
  const ModelConfig cfg = ModelConfig::tiny();
  const ParamStore p = build_model(cfg, 1);
  for (const auto& [h, w] : {std::pair<std::size_t, std::size_t>{32, 32}, {20, 45}}) {
    const Burst b = random_burst(h, w, 5);
    const Tensor out = forward(b, p, cfg);
    EXPECT_EQ(out, b.i1);
    EXPECT_TRUE(std::isinf(psnr(out, b.i1)));
  }
}

TEST(Forward, OddSizesArePaddedAndCropped) {
  const ModelConfig cfg = ModelConfig::tiny();
  const ParamStore p = randomized_model(cfg, 2);
  const Burst b = random_burst(19, 37, 6);
  const Burst padded = pad_burst(b, cfg);
  EXPECT_EQ(padded.i0.shape(), (Shape{32, 64, 3}));
  const Tensor r = forward_residual(b, p, cfg);
  EXPECT_EQ(r.shape(), (Shape{19, 37, 3}));
  for (double v : r.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Forward, RejectsBadBursts) {
  const ModelConfig cfg = ModelConfig::tiny();
  const ParamStore p = build_model(cfg, 1);
  Burst b = random_burst(16, 16, 7);
  b.i2 = Tensor({16, 15, 3});
  EXPECT_THROW(forward(b, p, cfg), ShapeError);
  Burst gray{Tensor({16, 16, 1}), Tensor({16, 16, 1}), Tensor({16, 16, 1})};
  EXPECT_THROW(forward(gray, p, cfg), ShapeError);
}

TEST(Forward, TracedMatchesEager) {
  const ModelConfig cfg = ModelConfig::tiny();
  const ParamStore p = randomized_model(cfg, 4);
  const Burst b = random_burst(32, 32, 8);
  ad::Tape tape;
  const Model<ad::Var> m = bind_model<ad::Var>(cfg, [&](const std::string& n) { return tape.leaf(p.at(n)); });
  const ad::Var r = forward_residual_core(m, cfg, tape.constant(b.i0), tape.constant(b.i1), tape.constant(b.i2));
  EXPECT_LT(max_abs_diff(r.value(), forward_residual(b, p, cfg)), 1e-12);
}

TEST(Forward, SimilarityMapsForIdenticalFrames) {
  const ModelConfig cfg = ModelConfig::tiny();
  ParamStore p = randomized_model(cfg, 5);
  // Give all three embedding groups the same filters so identical frames embed identically.
  Tensor& w = p.at("embed.weight");
  Tensor& bias = p.at("embed.bias");
  const std::size_t c0 = cfg.channels[0], slab = w.size() / w.dim(0);
  for (std::size_t co = c0; co < 3 * c0; ++co) {
    for (std::size_t i = 0; i < slab; ++i) w[co * slab + i] = w[(co % c0) * slab + i];
    bias[co] = bias[co % c0];
  }
  const Tensor frame = random_tensor({32, 32, 3}, 9, 0.0, 1.0);
  const auto maps = fusion_similarity_maps({frame, frame, frame}, p, cfg);
  ASSERT_EQ(maps.size(), 2u);
  for (const auto& m : maps)
    for (double v : m.data()) EXPECT_NEAR(v, 1.0, 1e-9);
}

TEST(Clamp, UnitInterval) {
  const Tensor y = clamp01(Tensor({4}, std::vector<double>{-0.5, 0.0, 0.3, 1.7}));
  EXPECT_EQ(y, Tensor({4}, std::vector<double>{0.0, 0.0, 0.3, 1.0}));
}

TEST(Checkpoint, RoundtripAndInference) {
  TempDir dir;
  const ModelConfig cfg = ModelConfig::tiny();
  const ParamStore p = randomized_model(cfg, 6);
  const auto path = dir.path() / "m.flk";
  save_checkpoint(p, path);
  const ParamStore q = load_model_checkpoint(path, cfg);
  ASSERT_EQ(q.names(), p.names());
  for (const auto& [name, t] : p) {
    const Tensor& u = q.at(name);
    for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(u[i], static_cast<double>(static_cast<float>(t[i])));
  }
  EXPECT_TRUE(test::same_architecture(infer_config(q), cfg));
  EXPECT_TRUE(test::same_architecture(infer_config(build_model(ModelConfig{}, 0)), ModelConfig{}));
}

CheckpointError::Kind load_error(const std::filesystem::path& path, const ModelConfig& cfg) {
  try {
    load_model_checkpoint(path, cfg);
  } catch (const CheckpointError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error for " << path;
  return CheckpointError::Kind::kIo;
}

TEST(Checkpoint, ErrorKinds) {
  TempDir dir;
  const ModelConfig cfg = ModelConfig::tiny();
  const ParamStore p = build_model(cfg, 1);
  const auto good = dir.path() / "good.flk";
  save_checkpoint(p, good);
  std::string bytes;
  {
    std::ifstream in(good, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto write = [&](const std::string& name, const std::string& content) {
    const auto path = dir.path() / name;
    std::ofstream(path, std::ios::binary) << content;
    return path;
  };

  EXPECT_EQ(load_error(dir.path() / "absent.flk", cfg), CheckpointError::Kind::kIo);
  EXPECT_EQ(load_error(write("magic.flk", "NOPE" + bytes.substr(4)), cfg), CheckpointError::Kind::kBadMagic);
  std::string versioned = bytes;
  versioned[4] = 9;
  EXPECT_EQ(load_error(write("version.flk", versioned), cfg), CheckpointError::Kind::kBadVersion);
  EXPECT_EQ(load_error(write("short.flk", bytes.substr(0, bytes.size() - 3)), cfg), CheckpointError::Kind::kTruncated);

  ParamStore extra = p;
  extra.add("stray", Tensor({1}));
  save_checkpoint(extra, dir.path() / "extra.flk");
  EXPECT_EQ(load_error(dir.path() / "extra.flk", cfg), CheckpointError::Kind::kUnexpectedNames);

  ModelConfig wider = cfg;
  wider.channels = {8, 16, 32};
  EXPECT_EQ(load_error(good, wider), CheckpointError::Kind::kShapeMismatch);
  ModelConfig deeper = cfg;
  deeper.blocks = {2, 2, 3};
  EXPECT_EQ(load_error(good, deeper), CheckpointError::Kind::kMissingNames);
}

}  // namespace
}  // namespace flk
