#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "config.hpp"
#include "flk/blocks.hpp"
#include "flk/error.hpp"
#include "flk/flicker.hpp"
#include "flk/image_io.hpp"
#include "flk/network.hpp"
#include "flk/spectral.hpp"
#include "flk/train.hpp"
#include "flk/verify.hpp"
#include "flk/wavelet.hpp"

namespace flk::cli {

namespace fs = std::filesystem;

namespace {

std::string num(double v) {
  if (!std::isfinite(v)) return format_metric(v);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

CliConfig config_or_default(const std::string& path) { return path.empty() ? CliConfig{} : load_config(path); }

struct BurstFiles {
  Burst frames;
  std::optional<Tensor> gt;
};

BurstFiles read_burst_dir(const fs::path& dir) {
  BurstFiles b;
  b.frames = {read_image(dir / "I0.png"), read_image(dir / "I1.png"), read_image(dir / "I2.png")};
  check_burst(b.frames);
  if (fs::exists(dir / "gt.png")) {
    b.gt = read_image(dir / "gt.png");
    require_same_shape(*b.gt, b.frames.i1, "burst ground truth");
  }
  return b;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string clean, config, out;
  std::optional<std::uint64_t> seed;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const CliConfig cfg = config_or_default(a.config);
  const Tensor clean = read_image(a.clean);
  const BurstTriplet burst = synth_burst(clean, cfg.flicker, a.seed.value_or(cfg.seed));
  const fs::path dir = a.out;
  ensure_dir(dir);
  for (std::size_t t = 0; t < 3; ++t) write_png(burst.frame(t), dir / ("I" + std::to_string(t) + ".png"));
  write_png(burst.gt, dir / "gt.png");

  std::ostringstream csv;
  csv << (cfg.flicker.orientation == StripeOrientation::kHorizontal ? "row" : "column") << ",g0,g1,g2\n";
  for (std::size_t r = 0; r < burst.gains[0].size(); ++r)
    csv << r << ',' << num(burst.gains[0][r]) << ',' << num(burst.gains[1][r]) << ',' << num(burst.gains[2][r]) << '\n';
  write_text(dir / "gains.csv", csv.str());
  out << "wrote " << dir.string() << " (stripe period " << num(cfg.flicker.stripe_period_rows()) << " rows)\n";
  return kOk;
}

struct ForwardArgs {
  std::string burst, ckpt, out;
};

int cmd_forward(const ForwardArgs& a, std::ostream& out) {
  const BurstFiles b = read_burst_dir(a.burst);
  const ParamStore params = load_checkpoint(a.ckpt);
  const ModelConfig cfg = infer_config(params);
  const Tensor pred = clamp01(forward(b.frames, params, cfg));
  write_image(pred, a.out);
  if (b.gt) {
    out << "psnr " << format_metric(psnr(pred, *b.gt)) << "\n";
    out << "ssim " << format_metric(ssim(pred, *b.gt)) << "\n";
  }
  return kOk;
}

struct TrainArgs {
  std::string burst, config, ckpt, curves;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  const CliConfig cfg = config_or_default(a.config);
  const BurstFiles b = read_burst_dir(a.burst);
  if (!b.gt) throw IoError("train: " + (fs::path(a.burst) / "gt.png").string() + " is required");
  BurstTriplet burst;
  burst.i0 = b.frames.i0;
  burst.i1 = b.frames.i1;
  burst.i2 = b.frames.i2;
  burst.gt = *b.gt;
  TrainOptions opts = cfg.train;
  if (a.seed) opts.seed = *a.seed;
  if (a.steps) opts.steps = *a.steps;
  const TrainResult result = train_overfit(burst, cfg.model, opts);
  save_checkpoint(result.params, a.ckpt);
  if (!a.curves.empty()) write_curves_csv(result, a.curves);
  out << "params " << result.params.scalar_count() << "\n";
  out << "l1 " << num(result.loss.front()) << " -> " << num(result.loss.back()) << "\n";
  out << "psnr " << format_metric(result.psnr.front()) << " -> " << format_metric(result.psnr.back()) << "\n";
  return kOk;
}

struct PhasedemoArgs {
  std::string a, b, out;
};

int cmd_phasedemo(const PhasedemoArgs& p, std::ostream& out) {
  const Tensor a = read_image(p.a);
  const Tensor b = read_image(p.b);
  require_same_shape(a, b, "phasedemo");
  const auto [a_swapped, b_swapped] = phase_swap(a, b);
  const fs::path dir = p.out;
  ensure_dir(dir);
  write_png(clamp01(a_swapped), dir / "a_swapped.png");
  write_png(clamp01(b_swapped), dir / "b_swapped.png");

  const Tensor pa = row_profile(luminance(a)), pb = row_profile(luminance(b));
  const Tensor pas = row_profile(luminance(a_swapped)), pbs = row_profile(luminance(b_swapped));
  std::ostringstream report;
  report << "pair,corr_with_own,corr_with_other,margin\n";
  const double a_own = pearson(pas, pa), a_other = pearson(pas, pb);
  const double b_own = pearson(pbs, pb), b_other = pearson(pbs, pa);
  report << "a_swapped," << num(a_own) << ',' << num(a_other) << ',' << num(a_other - a_own) << '\n';
  report << "b_swapped," << num(b_own) << ',' << num(b_other) << ',' << num(b_other - b_own) << '\n';
  write_text(dir / "report.csv", report.str());

  std::ostringstream profiles;
  profiles << "row,a,b,a_swapped,b_swapped\n";
  for (std::size_t r = 0; r < pa.size(); ++r)
    profiles << r << ',' << num(pa[r]) << ',' << num(pb[r]) << ',' << num(pas[r]) << ',' << num(pbs[r]) << '\n';
  write_text(dir / "profiles.csv", profiles.str());
  out << report.str();
  return kOk;
}

struct AnalyzeArgs {
  std::string img, out;
};

int cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  const Tensor img = read_image(a.img);
  const fs::path dir = a.out;
  ensure_dir(dir);

  // Zero lag sits at the centre of the heatmap.
  Tensor luma = img.dim(2) == 3 ? luminance(img) : img;
  const double mean = sum(luma) / static_cast<double>(luma.size());
  for (auto& v : luma.data()) v -= mean;
  const Tensor acf = roll(autocorrelation(luma), luma.dim(0) / 2, luma.dim(1) / 2);
  const HeatmapRange range = write_heatmap(acf, dir / "autocorrelation.png");

  const double row_period = estimate_period(row_profile(img));
  const double col_period = estimate_period(row_profile(transpose_hw(img)));

  const std::size_t h = img.dim(0) & ~std::size_t{1}, w = img.dim(1) & ~std::size_t{1};
  if (h == 0 || w == 0) throw ShapeError("analyze: image must be at least 2 x 2");
  const WaveletSubbands bands = haar_dwt(crop(img, h, w));
  const DirectionalEnergy e = directional_energy(bands);
  std::ostringstream table;
  table << "channel,ll,lh,hl,hh,lh_share\n";
  for (std::size_t c = 0; c < e.ll.size(); ++c) {
    const double detail = e.lh[c] + e.hl[c];
    table << c << ',' << num(e.ll[c]) << ',' << num(e.lh[c]) << ',' << num(e.hl[c]) << ',' << num(e.hh[c]) << ','
          << num(detail > 0.0 ? e.lh[c] / detail : 0.0) << '\n';
  }
  write_text(dir / "subbands.csv", table.str());

  std::ostringstream report;
  report << "stripe_period_rows " << num(row_period) << "\n";
  report << "stripe_period_columns " << num(col_period) << "\n";
  report << "autocorrelation_min " << num(range.min) << "\n";
  report << "autocorrelation_max " << num(range.max) << "\n";
  write_text(dir / "report.txt", report.str());
  out << report.str() << table.str();
  return kOk;
}

struct FlopsArgs {
  std::size_t height = 256, width = 256, channels = 32, window = 8, heads = 1;
};

int cmd_flops(const FlopsArgs& a, std::ostream& out) {
  const FlopReport r = flops_report(a.height, a.width, a.channels, a.window, a.heads);
  auto row = [&](const char* name, std::uint64_t wmha, std::uint64_t wdam) {
    out << name << ' ' << wmha << ' ' << wdam << '\n';
  };
  out << "term wmha wdam\n";
  row("attention_core", r.wmha.attention_core, r.wdam.attention_core);
  row("qkv_projection", r.wmha.qkv_projection, r.wdam.qkv_projection);
  row("merge_projection", r.wmha.merge_projection, r.wdam.merge_projection);
  row("modulation_conv", r.wmha.modulation_conv, r.wdam.modulation_conv);
  row("wavelet_transforms", r.wmha.wavelet_transforms, r.wdam.wavelet_transforms);
  row("high_band_conv", r.wmha.high_band_conv, r.wdam.high_band_conv);
  row("output_projection", r.wmha.output_projection, r.wdam.output_projection);
  row("branch", r.wmha.branch(), r.wdam.branch());
  row("total", r.wmha.total(), r.wdam.total());
  out << "core_ratio " << num(r.core_ratio) << '\n';
  out << "branch_ratio " << num(r.branch_ratio) << '\n';
  out << "total_ratio " << num(r.total_ratio) << '\n';
  out << "default_model_params " << build_model(ModelConfig{}, 0).scalar_count() << '\n';
  return kOk;
}

struct GradcheckArgs {
  bool full = false;
  bool verbose = false;
  std::uint64_t seed = 7;
};

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out) {
  const VerifyReport report = run_gradient_suite(a.full, a.seed);
  for (const CheckResult& c : report.checks) {
    if (!a.verbose && c.passed) continue;
    out << (c.passed ? "ok   " : "FAIL ") << c.kind << ' ' << c.name << " err " << num(c.error) << " tol "
        << num(c.tolerance);
    if (!c.worst.empty()) out << " worst " << c.worst;
    out << '\n';
  }
  out << report.checks.size() - report.failures() << '/' << report.checks.size() << " checks passed\n";
  return report.all_passed() ? kOk : kCheckFailed;
}

int exit_code_for(CheckpointError::Kind kind) {
  return kind == CheckpointError::Kind::kIo ? kIoFailure : kParseFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Burst deflicker toolkit: flicker synthesis, inference, training and analysis"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Simulate a flickered burst from a clean image");
  s->add_option("--clean", synth.clean, "Clean image (PNG or PPM)")->required();
  s->add_option("--config", synth.config, "key=value config file");
  s->add_option("--out", synth.out, "Output directory")->required();
  s->add_option("--seed", synth.seed, "Overrides the config seed");

  ForwardArgs fwd;
  auto* f = app.add_subcommand("forward", "Deflicker a burst with a checkpoint");
  f->add_option("--burst", fwd.burst, "Directory with I0.png, I1.png, I2.png and optional gt.png")->required();
  f->add_option("--ckpt", fwd.ckpt, "Checkpoint file")->required();
  f->add_option("--out", fwd.out, "Output image")->required();
  std::uint64_t unused_seed = 0;
  f->add_option("--seed", unused_seed, "Accepted for uniformity; inference is deterministic");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Overfit the network to one burst");
  t->add_option("--burst", train.burst, "Directory with I0.png, I1.png, I2.png and gt.png")->required();
  t->add_option("--config", train.config, "key=value config file");
  t->add_option("--out-ckpt", train.ckpt, "Checkpoint to write")->required();
  t->add_option("--curves", train.curves, "CSV of per-step L1 and PSNR");
  t->add_option("--seed", train.seed, "Overrides the config seed");
  t->add_option("--steps", train.steps, "Overrides train.steps");

  PhasedemoArgs demo;
  auto* p = app.add_subcommand("phasedemo", "Swap the phase spectra of two frames");
  p->add_option("--a", demo.a, "First frame")->required();
  p->add_option("--b", demo.b, "Second frame")->required();
  p->add_option("--out", demo.out, "Output directory")->required();
  std::uint64_t demo_seed = 0;
  p->add_option("--seed", demo_seed, "Accepted for uniformity; the demo is deterministic");

  AnalyzeArgs analyze;
  auto* an = app.add_subcommand("analyze", "Autocorrelation, stripe period and subband energies of an image");
  an->add_option("--img", analyze.img, "Input image")->required();
  an->add_option("--out", analyze.out, "Output directory")->required();
  std::uint64_t analyze_seed = 0;
  an->add_option("--seed", analyze_seed, "Accepted for uniformity; analysis is deterministic");

  FlopsArgs flops;
  auto* fl = app.add_subcommand("flops", "Multiply-accumulate counts of window attention versus WDAM");
  fl->add_option("--height", flops.height)->check(CLI::PositiveNumber);
  fl->add_option("--width", flops.width)->check(CLI::PositiveNumber);
  fl->add_option("--channels", flops.channels)->check(CLI::PositiveNumber);
  fl->add_option("--window", flops.window)->check(CLI::PositiveNumber);
  fl->add_option("--heads", flops.heads)->check(CLI::PositiveNumber);

  GradcheckArgs grad;
  auto* g = app.add_subcommand("gradcheck", "Adjoint and finite-difference gradient checks");
  g->add_flag("--full", grad.full, "Add the block and full-network checks");
  g->add_flag("--verbose", grad.verbose, "Print passing checks too");
  g->add_option("--seed", grad.seed, "Probe seed");

  std::vector<const char*> argv;
  if (args.empty()) argv.push_back("flk");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, out);
    if (f->parsed()) return cmd_forward(fwd, out);
    if (t->parsed()) return cmd_train(train, out);
    if (p->parsed()) return cmd_phasedemo(demo, out);
    if (an->parsed()) return cmd_analyze(analyze, out);
    if (fl->parsed()) return cmd_flops(flops, out);
    if (g->parsed()) return cmd_gradcheck(grad, out);
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kIoFailure;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kParseFailure;
  } catch (const CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const ShapeError& e) {
    err << "shape error: " << e.what() << "\n";
    return kShapeFailure;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kInternalFailure;
  }
  return kUsage;
}

}  // namespace flk::cli
