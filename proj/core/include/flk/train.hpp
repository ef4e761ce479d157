#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flk/flicker.hpp"
#include "flk/network.hpp"
#include "flk/tensor.hpp"

namespace flk {

/// Mean absolute difference.
double l1_loss(const Tensor& pred, const Tensor& target);

/// 10 log10(peak^2 / MSE); +infinity for identical inputs.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

/// Mean SSIM on Rec. 601 luminance with an 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, dynamic range 1, over the valid region.
double ssim(const Tensor& a, const Tensor& b);
/// Rec. 601 luma of an H x W x 3 image, as H x W x 1.
Tensor luminance(const Tensor& rgb);

/// Decimal text for metrics; infinities print as "inf".
std::string format_metric(double v);

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamOptions options;
  ParamStore m;  // first moments, keyed like the parameters
  ParamStore v;  // second moments
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of every parameter that has a gradient.
void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state);

struct TrainOptions {
  std::size_t steps = 500;
  AdamOptions adam;
  std::uint64_t seed = 0;
};

struct TrainResult {
  ParamStore params;
  /// steps + 1 rows: the value before each update, then after the last one.
  std::vector<double> loss;
  std::vector<double> psnr;
};

/// Fits the network to a single burst with L1 loss against the clean frame.
TrainResult train_overfit(const BurstTriplet& burst, const ModelConfig& cfg, const TrainOptions& options);

/// Same, continuing from existing parameters.
TrainResult train_overfit(const BurstTriplet& burst, const ModelConfig& cfg, ParamStore params,
                          const TrainOptions& options);

/// CSV with header "step,l1,psnr".
void write_curves_csv(const TrainResult& result, const std::filesystem::path& path);

}  // namespace flk
