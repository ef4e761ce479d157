#include "flk/train.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include "flk/autodiff.hpp"

namespace flk {

double l1_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "l1_loss");
  if (pred.empty()) throw ShapeError("l1_loss: empty tensors");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  require_same_shape(a, b, "psnr");
  if (a.empty()) throw ShapeError("psnr: empty tensors");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    se += d * d;
  }
  if (se == 0.0) return std::numeric_limits<double>::infinity();
  const double mse = se / static_cast<double>(a.size());
  return 10.0 * std::log10(peak * peak / mse);
}

Tensor luminance(const Tensor& rgb) {
  require_hwc(rgb, "luminance");
  if (rgb.shape()[2] != 3) throw ShapeError("luminance: expected 3 channels, got " + to_string(rgb.shape()));
  const std::size_t h = rgb.shape()[0], w = rgb.shape()[1];
  Tensor y(Shape{h, w, 1});
  for (std::size_t i = 0; i < h * w; ++i) y[i] = 0.299 * rgb[3 * i] + 0.587 * rgb[3 * i + 1] + 0.114 * rgb[3 * i + 2];
  return y;
}

namespace {

constexpr std::size_t kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::vector<double> gaussian_taps() {
  std::vector<double> g(kSsimWindow);
  const double centre = (kSsimWindow - 1) / 2.0;
  double total = 0.0;
  for (std::size_t i = 0; i < kSsimWindow; ++i) {
    const double d = static_cast<double>(i) - centre;
    g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Separable Gaussian filter over the valid region of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t oh = h - kSsimWindow + 1, ow = w - kSsimWindow + 1;
  std::vector<double> rows(h * ow), out(oh * ow);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) s += g[k] * plane[y * w + x + k];
      rows[y * ow + x] = s;
    }
  }
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double s = 0.0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) s += g[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double ssim(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "ssim");
  const Tensor ya = luminance(a), yb = luminance(b);
  const std::size_t h = ya.shape()[0], w = ya.shape()[1];
  if (h < kSsimWindow || w < kSsimWindow) {
    throw ShapeError("ssim: images must be at least 11x11, got " + to_string(a.shape()));
  }
  const std::size_t n = h * w;
  std::vector<double> pa(ya.data().begin(), ya.data().end()), pb(yb.data().begin(), yb.data().end());
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    aa[i] = pa[i] * pa[i];
    bb[i] = pb[i] * pb[i];
    ab[i] = pa[i] * pb[i];
  }
  const auto g = gaussian_taps();
  const auto mu_a = filter_valid(pa, h, w, g), mu_b = filter_valid(pb, h, w, g);
  const auto e_aa = filter_valid(aa, h, w, g), e_bb = filter_valid(bb, h, w, g), e_ab = filter_valid(ab, h, w, g);

  constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = e_aa[i] - ma * ma, vb = e_bb[i] - mb * mb, cov = e_ab[i] - ma * mb;
    total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return total / static_cast<double>(mu_a.size());
}

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out.precision(10);
  out << v;
  return out.str();
}

void adam_step(ParamStore& params, const ParamStore& grads, AdamState& state) {
  const AdamOptions& o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(o.beta1, t);
  const double correct2 = 1.0 - std::pow(o.beta2, t);
  for (auto& [name, p] : params) {
    if (!grads.contains(name)) continue;
    const Tensor& g = grads.at(name);
    require_same_shape(p, g, "adam_step");
    if (!state.m.contains(name)) {
      state.m.add(name, Tensor(p.shape()));
      state.v.add(name, Tensor(p.shape()));
    }
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      p[i] -= o.lr * m_hat / (std::sqrt(v_hat) + o.eps);
    }
  }
}

TrainResult train_overfit(const BurstTriplet& burst, const ModelConfig& cfg, const TrainOptions& options) {
  return train_overfit(burst, cfg, build_model(cfg, options.seed), options);
}

TrainResult train_overfit(const BurstTriplet& burst, const ModelConfig& cfg, ParamStore params,
                          const TrainOptions& options) {
  const Burst frames{burst.i0, burst.i1, burst.i2};
  check_burst(frames);
  require_same_shape(burst.gt, burst.i1, "train_overfit");
  const Burst padded = pad_burst(frames, cfg);
  const std::size_t h = burst.i1.shape()[0], w = burst.i1.shape()[1];

  TrainResult result;
  AdamState adam{options.adam, {}, {}, 0};
  auto record = [&](double loss, const Tensor& pred, std::size_t step) {
    if (!std::isfinite(loss)) throw NumericError("train_overfit: non-finite loss at step " + std::to_string(step));
    result.loss.push_back(loss);
    result.psnr.push_back(psnr(clamp01(pred), burst.gt));
  };

  for (std::size_t step = 0; step < options.steps; ++step) {
    ad::Tape tape;
    std::vector<std::pair<std::string, ad::Var>> leaves;
    const Model<ad::Var> model = bind_model<ad::Var>(cfg, [&](const std::string& name) {
      const ad::Var v = tape.leaf(params.at(name));
      leaves.emplace_back(name, v);
      return v;
    });
    const ad::Var i0 = tape.constant(padded.i0), i1 = tape.constant(padded.i1), i2 = tape.constant(padded.i2);
    ad::Var residual = forward_residual_core(model, cfg, i0, i1, i2);
    if (residual.shape()[0] != h || residual.shape()[1] != w) residual = crop(residual, h, w);
    const ad::Var pred = tape.constant(burst.i1) + residual;
    const ad::Var loss = mean_abs_diff(pred, tape.constant(burst.gt));
    record(loss.value().item(), pred.value(), step);

    const ad::Gradients grads = tape.backward(loss);
    ParamStore grad_store;
    for (const auto& [name, v] : leaves) grad_store.add(name, grads.of(v));
    adam_step(params, grad_store, adam);
  }

  const Tensor pred = forward(frames, params, cfg);
  record(l1_loss(pred, burst.gt), pred, options.steps);
  result.params = std::move(params);
  return result;
}

void write_curves_csv(const TrainResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "step,l1,psnr\n";
  for (std::size_t i = 0; i < result.loss.size(); ++i) {
    out << i << ',' << format_metric(result.loss[i]) << ',' << format_metric(result.psnr[i]) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace flk
