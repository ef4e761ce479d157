// One PASS/FAIL line per acceptance criterion; exits nonzero if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "flk/flicker.hpp"
#include "flk/network.hpp"
#include "flk/random.hpp"
#include "flk/spectral.hpp"
#include "flk/train.hpp"
#include "flk/verify.hpp"
#include "flk/wavelet.hpp"

namespace {

using namespace flk;
using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double sum_sq(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += v * v;
  return s;
}

// ---------------------------------------------------------------------------

Outcome spectral_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(101);
  double roundtrip = 0.0, parseval = 0.0;
  for (const auto& [h, w] : std::vector<std::pair<std::size_t, std::size_t>>{{4, 4}, {7, 5}, {8, 8}, {64, 64}, {31, 33}, {128, 96}, {23, 29}}) {
    const Tensor x = rng.uniform_tensor({h, w, 3}, -1.0, 1.0);
    const ComplexTensor X = fft2(x);
    roundtrip = std::max(roundtrip, max_abs_diff(ifft2(X), x));
    double spectral = 0.0;
    for (const auto& z : X.data()) spectral += std::norm(z);
    spectral /= static_cast<double>(h * w);
    parseval = std::max(parseval, std::abs(spectral / sum_sq(x) - 1.0));
  }
  double naive = 0.0;
  for (const auto& [h, w] : std::vector<std::pair<std::size_t, std::size_t>>{{4, 4}, {7, 5}, {8, 8}}) {
    const Tensor x = rng.uniform_tensor({h, w, 2}, -1.0, 1.0);
    const ComplexTensor X = fft2(x);
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t u = 0; u < h; ++u)
        for (std::size_t v = 0; v < w; ++v) {
          std::complex<long double> acc = 0;
          for (std::size_t y = 0; y < h; ++y)
            for (std::size_t xx = 0; xx < w; ++xx) {
              const long double ang = -2.0L * std::numbers::pi_v<long double> *
                                      (static_cast<long double>(u * y) / h + static_cast<long double>(v * xx) / w);
              acc += static_cast<long double>(x.at(y, xx, c)) * std::polar(1.0L, ang);
            }
          const Complex ref{static_cast<double>(acc.real()), static_cast<double>(acc.imag())};
          naive = std::max(naive, std::abs(X[(u * w + v) * 2 + c] - ref));
        }
  }
  const double elapsed = seconds_since(t0);
  o.require(roundtrip < 1e-9, "roundtrip " + fmt("%.2e", roundtrip));
  o.require(parseval < 1e-8, "parseval " + fmt("%.2e", parseval));
  o.require(naive < 1e-9, "naive dft " + fmt("%.2e", naive));
  o.require(elapsed < 5.0, "time " + fmt("%.2fs", elapsed));
  return o;
}

Outcome autocorrelation_check() {
  Outcome o;
  Rng rng(202);
  double brute = 0.0, zero_lag = 0.0;
  for (std::size_t n : {6u, 8u}) {
    const Tensor x = rng.uniform_tensor({n, n, 1}, -1.0, 1.0);
    const Tensor r = autocorrelation(x);
    for (std::size_t ty = 0; ty < n; ++ty)
      for (std::size_t tx = 0; tx < n; ++tx) {
        double acc = 0.0;
        for (std::size_t y = 0; y < n; ++y)
          for (std::size_t xx = 0; xx < n; ++xx) acc += x.at(y, xx, 0) * x.at((y + ty) % n, (xx + tx) % n, 0);
        brute = std::max(brute, std::abs(r.at(ty, tx, 0) - acc));
      }
    zero_lag = std::max(zero_lag, std::abs(r[0] / sum_sq(x) - 1.0));
  }
  o.require(brute < 1e-8, "brute force " + fmt("%.2e", brute));
  o.require(zero_lag < 1e-10, "zero lag " + fmt("%.2e", zero_lag));
  return o;
}

Outcome phase_correlation_check() {
  Outcome o;
  Rng rng(303);
  const std::size_t h = 48, w = 40;
  const Tensor a = rng.uniform_tensor({h, w, 1}, 0.0, 1.0);
  int hits = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t dy = rng.index(h), dx = rng.index(w);
    const Shift s = phase_correlation_peak(a, roll(a, dy, dx));
    if (s.dy == dy && s.dx == dx) ++hits;
  }
  o.require(hits == 20, std::to_string(hits) + "/20 shifts");
  return o;
}

Outcome wavelet_suite() {
  Outcome o;
  Rng rng(404);
  double recon = 0.0, energy = 0.0;
  for (const auto& [h, w] : std::vector<std::pair<std::size_t, std::size_t>>{{2, 2}, {16, 16}, {64, 48}, {10, 30}}) {
    const Tensor x = rng.uniform_tensor({h, w, 3}, -1.0, 1.0);
    const WaveletSubbands s = haar_dwt(x);
    recon = std::max(recon, max_abs_diff(haar_idwt(s), x));
    energy = std::max(energy, std::abs((sum_sq(s.ll) + sum_sq(s.lh) + sum_sq(s.hl) + sum_sq(s.hh)) / sum_sq(x) - 1.0));
  }
  Tensor stripes({32, 32, 1});
  for (std::size_t y = 0; y < 32; ++y)
    for (std::size_t x = 0; x < 32; ++x) stripes.at(y, x, 0) = (y % 2 == 0) ? 1.0 : 0.0;
  auto share = [](const DirectionalEnergy& e, double band) { return band / (e.lh[0] + e.hl[0] + e.hh[0]); };
  const DirectionalEnergy eh = directional_energy(haar_dwt(stripes));
  const DirectionalEnergy ev = directional_energy(haar_dwt(transpose_hw(stripes)));
  const double lh = share(eh, eh.lh[0]), hl = share(ev, ev.hl[0]);
  o.require(recon < 1e-10, "reconstruction " + fmt("%.2e", recon));
  o.require(energy < 1e-10, "energy " + fmt("%.2e", energy));
  o.require(lh > 0.9, "LH share " + fmt("%.3f", lh));
  o.require(hl > 0.9, "HL share after transpose " + fmt("%.3f", hl));
  return o;
}

Outcome gradient_suite() {
  Outcome o;
  const auto t0 = Clock::now();
  const VerifyReport report = run_gradient_suite(true, 7);
  const double elapsed = seconds_since(t0);
  double adjoint = 0.0, op = 0.0, network = 0.0;
  for (const CheckResult& c : report.checks) {
    if (c.kind == "adjoint") adjoint = std::max(adjoint, c.error);
    if (c.kind == "gradcheck" || c.kind == "block") op = std::max(op, c.error);
    if (c.kind == "network") network = c.error;
    if (!c.passed) o.require(false, "failed " + c.kind + " " + c.name);
  }
  o.require(adjoint < 1e-9, "adjoint " + fmt("%.2e", adjoint));
  o.require(op < 1e-4, "op gradcheck " + fmt("%.2e", op));
  o.require(network < 1e-3, "network " + fmt("%.2e", network));
  o.require(elapsed < 60.0, "time " + fmt("%.1fs", elapsed) + ", " + std::to_string(report.checks.size()) + " checks");
  return o;
}

Outcome flops_check() {
  Outcome o;
  double worst_core = 0.0, lo = 1.0, hi = 0.0;
  for (const auto& [h, w, c, m, heads] : std::vector<std::array<std::size_t, 5>>{
           {64, 64, 32, 8, 2}, {256, 256, 32, 8, 1}, {128, 128, 64, 8, 2}, {64, 64, 96, 8, 4}, {96, 160, 48, 4, 2}}) {
    const FlopReport r = flops_report(h, w, c, m, heads);
    worst_core = std::max(worst_core, std::abs(r.core_ratio - 0.25));
    lo = std::min(lo, r.branch_ratio);
    hi = std::max(hi, r.branch_ratio);
  }
  o.require(worst_core == 0.0, "core ratio 0.25 exact");
  o.require(lo >= 0.25 && hi <= 0.40, "block ratio " + fmt("%.4f", lo) + ".." + fmt("%.4f", hi));
  return o;
}

Outcome param_count() {
  Outcome o;
  const std::size_t n = build_model(ModelConfig{}, 0).scalar_count();
  o.require(n >= 3'100'000 && n <= 4'700'000, std::to_string(n) + " parameters");
  return o;
}

Outcome zero_init_identity() {
  Outcome o;
  const ModelConfig cfg;
  const ParamStore p = build_model(cfg, 0);
  const BurstTriplet b = synth_burst(synthetic_scene(64, 64, 1), FlickerParams{}, 1);
  const Tensor out = forward({b.i0, b.i1, b.i2}, p, cfg);
  o.require(out == b.i1, "output equals I1");
  const double db = psnr(out, b.i1);
  o.require(std::isinf(db) && db > 0, "psnr " + format_metric(db));
  return o;
}

BurstTriplet desk_burst() { return synth_burst(synthetic_scene(64, 64, 5), FlickerParams{}, 5); }

Outcome desk_training() {
  Outcome o;
  const BurstTriplet b = desk_burst();
  TrainOptions opts;
  opts.steps = 500;
  opts.adam.lr = 1e-4;
  opts.seed = 0;
  const auto t0 = Clock::now();
  const TrainResult r = train_overfit(b, ModelConfig::tiny(), opts);
  const double elapsed = seconds_since(t0);

  TrainOptions replay = opts;
  replay.steps = 20;
  const TrainResult again = train_overfit(b, ModelConfig::tiny(), replay);
  const bool same = std::equal(again.loss.begin(), again.loss.end(), r.loss.begin());

  const double ratio = r.loss.back() / r.loss.front();
  const double gain = r.psnr.back() - r.psnr.front();
  o.require(ratio <= 0.10, "L1 " + fmt("%.4f", r.loss.front()) + " -> " + fmt("%.4f", r.loss.back()) + " (" +
                               fmt("%.1f%%", 100 * ratio) + ")");
  o.require(gain >= 3.0, "psnr " + fmt("%.2f", r.psnr.front()) + " -> " + fmt("%.2f", r.psnr.back()) + " dB");
  o.require(same, "replay bitwise identical");
  o.require(elapsed < 600.0, "time " + fmt("%.0fs", elapsed));
  return o;
}

Outcome phase_swap_margin() {
  Outcome o;
  FlickerParams fp;
  fp.row_readout_time = 400e-6;  // 25-row stripes on a 64-row frame
  const BurstTriplet b = synth_burst(synthetic_scene(64, 64, 11), fp, 0);
  const auto [as, bs] = phase_swap(b.i0, b.i2);
  const Tensor pa = row_profile(luminance(b.i0)), pb = row_profile(luminance(b.i2));
  const double margin_a = pearson(row_profile(luminance(as)), pb) - pearson(row_profile(luminance(as)), pa);
  const double margin_b = pearson(row_profile(luminance(bs)), pa) - pearson(row_profile(luminance(bs)), pb);
  const double margin = std::min(margin_a, margin_b);
  o.require(margin >= 0.2, "margin " + fmt("%.3f", margin));
  return o;
}

Outcome flicker_physics() {
  Outcome o;
  FlickerParams full;
  full.exposure_time = full.flicker_period();
  double variation = 0.0;
  for (double phi : full.phase_offsets) {
    const Tensor g = gain_vector(300, phi, full);
    const auto [lo, hi] = std::minmax_element(g.data().begin(), g.data().end());
    variation = std::max(variation, *hi - *lo);
  }
  o.require(variation < 1e-6, "full-period variation " + fmt("%.1e", variation));

  struct Setting {
    double f, t_row;
  };
  for (const Setting s : {Setting{50.0, 100e-6}, Setting{60.0, 60e-6}, Setting{50.0, 40e-6}}) {
    FlickerParams fp;
    fp.ac_frequency = s.f;
    fp.row_readout_time = s.t_row;
    const double predicted = 1.0 / (2.0 * s.f * s.t_row);
    const auto rows = static_cast<std::size_t>(std::ceil(predicted * 5));
    const BurstTriplet b = synth_burst(synthetic_scene(rows, 32, 3), fp, 0);
    const double measured = estimate_period(row_profile(b.i0 - b.gt));
    o.require(std::abs(measured - predicted) <= 1.0,
              "period " + fmt("%.2f", measured) + " vs " + fmt("%.2f", predicted));
  }
  return o;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"spectral_suite", spectral_suite},
      {"autocorrelation", autocorrelation_check},
      {"phase_correlation_shifts", phase_correlation_check},
      {"wavelet_suite", wavelet_suite},
      {"gradient_verification", gradient_suite},
      {"attention_flops", flops_check},
      {"parameter_count", param_count},
      {"zero_init_identity", zero_init_identity},
      {"desk_scale_training", desk_training},
      {"phase_swap_exchange", phase_swap_margin},
      {"flicker_physics", flicker_physics},
  };
  int failures = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    if (!o.pass) ++failures;
    std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
