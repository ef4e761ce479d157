#include <cmath>

#include "flk/autodiff.hpp"
#include "flk/wavelet.hpp"

namespace flk::ad {

namespace {

Tape& tape_of(const Var& v) {
  if (!v.valid()) throw Error("traced op on an unbound value");
  return *v.tape();
}

ComplexTensor as_complex(const Tensor& pairs) { return ComplexTensor::from_pairs(pairs); }

void require_pairs(const Var& v, const char* op) {
  if (v.shape().size() != 4 || v.shape().back() != 2) {
    throw ShapeError(std::string(op) + ": expected complex H x W x C x 2 value, got " + to_string(v.shape()));
  }
}

}  // namespace

// --- elementwise -----------------------------------------------------------

Var add(const Var& a, const Var& b) {
  return tape_of(a).record("add", flk::add(a.value(), b.value()), {a, b}, [](BackwardContext& ctx) {
    ctx.accumulate(0, ctx.grad_out());
    ctx.accumulate(1, ctx.grad_out());
  });
}

Var sub(const Var& a, const Var& b) {
  return tape_of(a).record("sub", flk::sub(a.value(), b.value()), {a, b}, [](BackwardContext& ctx) {
    ctx.accumulate(0, ctx.grad_out());
    ctx.accumulate(1, flk::scale(ctx.grad_out(), -1.0));
  });
}

Var mul(const Var& a, const Var& b) {
  return tape_of(a).record("mul", flk::mul(a.value(), b.value()), {a, b}, [](BackwardContext& ctx) {
    if (ctx.needs_grad(0)) ctx.accumulate(0, flk::mul(ctx.grad_out(), ctx.input(1)));
    if (ctx.needs_grad(1)) ctx.accumulate(1, flk::mul(ctx.grad_out(), ctx.input(0)));
  });
}

Var scale(const Var& a, double s) {
  return tape_of(a).record("scale", flk::scale(a.value(), s), {a},
                           [s](BackwardContext& ctx) { ctx.accumulate(0, flk::scale(ctx.grad_out(), s)); });
}

Var mul_scalar(const Var& s, const Var& x) {
  return tape_of(x).record("mul_scalar", flk::mul_scalar(s.value(), x.value()), {s, x}, [](BackwardContext& ctx) {
    if (ctx.needs_grad(0)) ctx.accumulate(0, Tensor::scalar(flk::dot(ctx.grad_out(), ctx.input(1))));
    if (ctx.needs_grad(1)) ctx.accumulate(1, flk::mul_scalar(ctx.input(0), ctx.grad_out()));
  });
}

Var sum(const Var& x) {
  return tape_of(x).record("sum", Tensor::scalar(flk::sum(x.value())), {x}, [](BackwardContext& ctx) {
    ctx.accumulate(0, Tensor(ctx.input(0).shape(), ctx.grad_out()[0]));
  });
}

Var dot(const Var& a, const Var& b) {
  return tape_of(a).record("dot", Tensor::scalar(flk::dot(a.value(), b.value())), {a, b}, [](BackwardContext& ctx) {
    const double g = ctx.grad_out()[0];
    if (ctx.needs_grad(0)) ctx.accumulate(0, flk::scale(ctx.input(1), g));
    if (ctx.needs_grad(1)) ctx.accumulate(1, flk::scale(ctx.input(0), g));
  });
}

Var mean_abs_diff(const Var& pred, const Var& target) {
  require_same_shape(pred.value(), target.value(), "mean_abs_diff");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.value().size(); ++i) acc += std::abs(pred.value()[i] - target.value()[i]);
  const double n = static_cast<double>(pred.value().size());
  return tape_of(pred).record("mean_abs_diff", Tensor::scalar(acc / n), {pred, target}, [n](BackwardContext& ctx) {
    const Tensor& p = ctx.input(0);
    const Tensor& t = ctx.input(1);
    Tensor g(p.shape());
    const double s = ctx.grad_out()[0] / n;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double d = p[i] - t[i];
      g[i] = d > 0.0 ? s : (d < 0.0 ? -s : 0.0);
    }
    if (ctx.needs_grad(0)) ctx.accumulate(0, g);
    if (ctx.needs_grad(1)) ctx.accumulate(1, flk::scale(g, -1.0));
  });
}

Var reshape(const Var& x, Shape shape) {
  return tape_of(x).record("reshape", x.value().reshaped(std::move(shape)), {x}, [](BackwardContext& ctx) {
    ctx.accumulate(0, ctx.grad_out().reshaped(ctx.input(0).shape()));
  });
}

// --- activations -----------------------------------------------------------

Var relu(const Var& x) {
  return tape_of(x).record("relu", flk::relu(x.value()), {x}, [](BackwardContext& ctx) {
    const Tensor& in = ctx.input(0);
    Tensor g(in.shape());
    // Subgradient 0 at the kink.
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = in[i] > 0.0 ? ctx.grad_out()[i] : 0.0;
    ctx.accumulate(0, g);
  });
}

Var gelu(const Var& x) {
  return tape_of(x).record("gelu", flk::gelu(x.value()), {x}, [](BackwardContext& ctx) {
    const Tensor& in = ctx.input(0);
    Tensor g(in.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = ctx.grad_out()[i] * gelu_grad_scalar(in[i]);
    ctx.accumulate(0, g);
  });
}

Var sigmoid(const Var& x) {
  return tape_of(x).record("sigmoid", flk::sigmoid(x.value()), {x}, [](BackwardContext& ctx) {
    const Tensor& y = ctx.output();
    Tensor g(y.shape());
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = ctx.grad_out()[i] * y[i] * (1.0 - y[i]);
    ctx.accumulate(0, g);
  });
}

Var softmax_rows(const Var& x) {
  return tape_of(x).record("softmax_rows", flk::softmax_rows(x.value()), {x}, [](BackwardContext& ctx) {
    const Tensor& y = ctx.output();
    const Tensor& go = ctx.grad_out();
    const std::size_t n = y.shape().back();
    Tensor g(y.shape());
    for (std::size_t r = 0; r < y.size() / n; ++r) {
      const std::size_t base = r * n;
      double inner = 0.0;
      for (std::size_t i = 0; i < n; ++i) inner += go[base + i] * y[base + i];
      for (std::size_t i = 0; i < n; ++i) g[base + i] = y[base + i] * (go[base + i] - inner);
    }
    ctx.accumulate(0, g);
  });
}

Var layer_norm(const Var& x, const Var& weight, const Var& bias) {
  return tape_of(x).record(
      "layer_norm", flk::layer_norm(x.value(), weight.value(), bias.value()), {x, weight, bias},
      [](BackwardContext& ctx) {
        const Tensor& in = ctx.input(0);
        const Tensor& w = ctx.input(1);
        const Tensor& go = ctx.grad_out();
        const std::size_t c = in.shape().back();
        const double cd = static_cast<double>(c);
        Tensor gx(in.shape()), gw(w.shape()), gb(w.shape());
        std::vector<double> xhat(c), gxhat(c);
        for (std::size_t p = 0; p < in.size() / c; ++p) {
          const std::size_t base = p * c;
          double mean = 0.0;
          for (std::size_t i = 0; i < c; ++i) mean += in[base + i];
          mean /= cd;
          double var = 0.0;
          for (std::size_t i = 0; i < c; ++i) var += (in[base + i] - mean) * (in[base + i] - mean);
          var /= cd;
          const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t i = 0; i < c; ++i) {
            xhat[i] = (in[base + i] - mean) * inv;
            gxhat[i] = go[base + i] * w[i];
            gw[i] += go[base + i] * xhat[i];
            gb[i] += go[base + i];
            sum_g += gxhat[i];
            sum_gx += gxhat[i] * xhat[i];
          }
          for (std::size_t i = 0; i < c; ++i) gx[base + i] = inv / cd * (cd * gxhat[i] - sum_g - xhat[i] * sum_gx);
        }
        ctx.accumulate(0, gx);
        ctx.accumulate(1, gw);
        ctx.accumulate(2, gb);
      });
}

// --- layout ----------------------------------------------------------------

Var concat_channels(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  std::vector<Tensor> values;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    values.push_back(p.value());
    widths.push_back(p.shape().at(2));
  }
  return tape_of(parts[0]).record("concat_channels", flk::concat_channels(values), parts,
                                  [widths](BackwardContext& ctx) {
                                    std::size_t offset = 0;
                                    for (std::size_t i = 0; i < widths.size(); ++i) {
                                      if (ctx.needs_grad(i)) {
                                        ctx.accumulate(i, flk::slice_channels(ctx.grad_out(), offset, widths[i]));
                                      }
                                      offset += widths[i];
                                    }
                                  });
}

Var slice_channels(const Var& x, std::size_t begin, std::size_t count) {
  return tape_of(x).record("slice_channels", flk::slice_channels(x.value(), begin, count), {x},
                           [begin, count](BackwardContext& ctx) {
                             Tensor& g = ctx.grad(0);
                             const std::size_t c = g.shape()[2];
                             const Tensor& go = ctx.grad_out();
                             for (std::size_t px = 0; px < go.size() / count; ++px)
                               for (std::size_t k = 0; k < count; ++k) g[px * c + begin + k] += go[px * count + k];
                           });
}

Var interleave_channels(const Var& a, const Var& b) {
  return tape_of(a).record("interleave_channels", flk::interleave_channels(a.value(), b.value()), {a, b},
                           [](BackwardContext& ctx) {
                             auto [ga, gb] = deinterleave_channels(ctx.grad_out());
                             ctx.accumulate(0, ga);
                             ctx.accumulate(1, gb);
                           });
}

Var crop(const Var& x, std::size_t h, std::size_t w) {
  return tape_of(x).record("crop", flk::crop(x.value(), h, w), {x}, [](BackwardContext& ctx) {
    const Shape& s = ctx.input(0).shape();
    ctx.accumulate(0, flk::uncrop(ctx.grad_out(), s[0], s[1]));
  });
}

Var conv2d(const Var& x, const ConvSpec& spec, const Var& weight, const Var* bias) {
  std::vector<Var> inputs{x, weight};
  if (bias) inputs.push_back(*bias);
  const bool has_bias = bias != nullptr;
  return tape_of(x).record(
      "conv2d", flk::conv2d(x.value(), spec, weight.value(), bias ? &bias->value() : nullptr), std::move(inputs),
      [spec, has_bias](BackwardContext& ctx) {
        const Tensor& in = ctx.input(0);
        if (ctx.needs_grad(0)) {
          ctx.accumulate(0, conv2d_grad_input(ctx.grad_out(), spec, ctx.input(1), in.shape()[0], in.shape()[1]));
        }
        if (ctx.needs_grad(1)) ctx.accumulate(1, conv2d_grad_weight(ctx.grad_out(), in, spec));
        if (has_bias && ctx.needs_grad(2)) ctx.accumulate(2, conv2d_grad_bias(ctx.grad_out()));
      });
}

Var upsample_nearest(const Var& x) {
  return tape_of(x).record("upsample_nearest", flk::upsample_nearest(x.value()), {x}, [](BackwardContext& ctx) {
    ctx.accumulate(0, upsample_nearest_adjoint(ctx.grad_out()));
  });
}

// --- window attention ------------------------------------------------------

Var window_partition(const Var& x, std::size_t window) {
  return tape_of(x).record("window_partition", flk::window_partition(x.value(), window), {x},
                           [](BackwardContext& ctx) {
                             const Shape& s = ctx.input(0).shape();
                             ctx.accumulate(0, flk::window_merge(ctx.grad_out(), s[0], s[1]));
                           });
}

Var window_merge(const Var& windows, std::size_t h, std::size_t w) {
  const std::size_t area = windows.shape().at(1);
  std::size_t window = 1;
  while (window * window < area) ++window;
  return tape_of(windows).record("window_merge", flk::window_merge(windows.value(), h, w), {windows},
                                 [window](BackwardContext& ctx) {
                                   ctx.accumulate(0, flk::window_partition(ctx.grad_out(), window));
                                 });
}

Var attn_scores(const Var& q, const Var& k, std::size_t heads, double scale) {
  return tape_of(q).record("attn_scores", flk::attn_scores(q.value(), k.value(), heads, scale), {q, k},
                           [heads, scale](BackwardContext& ctx) {
                             Tensor gq, gk;
                             attn_scores_grad(ctx.grad_out(), ctx.input(0), ctx.input(1), heads, scale, gq, gk);
                             ctx.accumulate(0, gq);
                             ctx.accumulate(1, gk);
                           });
}

Var add_rel_bias(const Var& scores, const Var& table, std::size_t window) {
  return tape_of(scores).record("add_rel_bias", flk::add_rel_bias(scores.value(), table.value(), window),
                                {scores, table}, [window](BackwardContext& ctx) {
                                  ctx.accumulate(0, ctx.grad_out());
                                  if (ctx.needs_grad(1)) {
                                    ctx.accumulate(1, rel_bias_table_grad(ctx.grad_out(), ctx.input(1).shape()[0],
                                                                          window));
                                  }
                                });
}

Var attn_apply(const Var& probs, const Var& v, std::size_t heads) {
  return tape_of(v).record("attn_apply", flk::attn_apply(probs.value(), v.value(), heads), {probs, v},
                           [heads](BackwardContext& ctx) {
                             Tensor gp, gv;
                             attn_apply_grad(ctx.grad_out(), ctx.input(0), ctx.input(1), heads, gp, gv);
                             ctx.accumulate(0, gp);
                             ctx.accumulate(1, gv);
                           });
}

// --- wavelet ---------------------------------------------------------------

Var haar_dwt_packed(const Var& x) {
  // Orthonormal: the adjoint is the inverse.
  return tape_of(x).record("haar_dwt", flk::haar_dwt_packed(x.value()), {x}, [](BackwardContext& ctx) {
    ctx.accumulate(0, flk::haar_idwt_packed(ctx.grad_out()));
  });
}

Var haar_idwt_packed(const Var& packed) {
  return tape_of(packed).record("haar_idwt", flk::haar_idwt_packed(packed.value()), {packed},
                                [](BackwardContext& ctx) { ctx.accumulate(0, flk::haar_dwt_packed(ctx.grad_out())); });
}

// --- spectral --------------------------------------------------------------

Var fft2(const Var& x) {
  return tape_of(x).record("fft2", flk::fft2(x.value()).to_pairs(), {x}, [](BackwardContext& ctx) {
    // Adjoint of Re/Im of the forward DFT: Re(unnormalized inverse DFT).
    const Shape& s = ctx.input(0).shape();
    const double n = static_cast<double>(s[0] * s[1]);
    ctx.accumulate(0, flk::scale(ifft2_complex(as_complex(ctx.grad_out())).real(), n));
  });
}

Var ifft2(const Var& spectrum) {
  require_pairs(spectrum, "ifft2");
  return tape_of(spectrum).record("ifft2", flk::ifft2(as_complex(spectrum.value())), {spectrum},
                                  [](BackwardContext& ctx) {
                                    const Shape& s = ctx.input(0).shape();
                                    const double n = static_cast<double>(s[0] * s[1]);
                                    ComplexTensor g = flk::fft2(ctx.grad_out());
                                    for (auto& v : g.data()) v /= n;
                                    ctx.accumulate(0, g.to_pairs());
                                  });
}

Var abs2(const Var& spectrum) {
  require_pairs(spectrum, "abs2");
  return tape_of(spectrum).record("abs2", flk::abs2(as_complex(spectrum.value())), {spectrum},
                                  [](BackwardContext& ctx) {
                                    const Tensor& z = ctx.input(0);
                                    Tensor g(z.shape());
                                    for (std::size_t i = 0; i < ctx.grad_out().size(); ++i) {
                                      g[2 * i] = 2.0 * z[2 * i] * ctx.grad_out()[i];
                                      g[2 * i + 1] = 2.0 * z[2 * i + 1] * ctx.grad_out()[i];
                                    }
                                    ctx.accumulate(0, g);
                                  });
}

Var real_to_complex(const Var& x) {
  return tape_of(x).record("real_to_complex", flk::real_to_complex(x.value()).to_pairs(), {x},
                           [](BackwardContext& ctx) { ctx.accumulate(0, as_complex(ctx.grad_out()).real()); });
}

Var add_real(const Var& spectrum, const Var& a) {
  require_pairs(spectrum, "add_real");
  return tape_of(spectrum).record("add_real", flk::add_real(as_complex(spectrum.value()), a.value()).to_pairs(),
                                  {spectrum, a}, [](BackwardContext& ctx) {
                                    ctx.accumulate(0, ctx.grad_out());
                                    if (ctx.needs_grad(1)) ctx.accumulate(1, as_complex(ctx.grad_out()).real());
                                  });
}

Var mul_real(const Var& spectrum, const Var& gate) {
  require_pairs(spectrum, "mul_real");
  return tape_of(spectrum).record(
      "mul_real", flk::mul_real(as_complex(spectrum.value()), gate.value()).to_pairs(), {spectrum, gate},
      [](BackwardContext& ctx) {
        const Tensor& z = ctx.input(0);
        const Tensor& w = ctx.input(1);
        const Tensor& go = ctx.grad_out();
        if (ctx.needs_grad(0)) {
          Tensor gz(z.shape());
          for (std::size_t i = 0; i < w.size(); ++i) {
            gz[2 * i] = go[2 * i] * w[i];
            gz[2 * i + 1] = go[2 * i + 1] * w[i];
          }
          ctx.accumulate(0, gz);
        }
        if (ctx.needs_grad(1)) {
          Tensor gw(w.shape());
          for (std::size_t i = 0; i < w.size(); ++i) gw[i] = go[2 * i] * z[2 * i] + go[2 * i + 1] * z[2 * i + 1];
          ctx.accumulate(1, gw);
        }
      });
}

Var phase(const Var& spectrum) {
  require_pairs(spectrum, "phase");
  return tape_of(spectrum).record("phase", flk::phase(as_complex(spectrum.value())), {spectrum},
                                  [](BackwardContext& ctx) {
                                    const Tensor& z = ctx.input(0);
                                    Tensor g(z.shape());
                                    for (std::size_t i = 0; i < ctx.grad_out().size(); ++i) {
                                      const double re = z[2 * i], im = z[2 * i + 1];
                                      const double m2 = re * re + im * im;
                                      if (m2 == 0.0) continue;
                                      g[2 * i] = -im / m2 * ctx.grad_out()[i];
                                      g[2 * i + 1] = re / m2 * ctx.grad_out()[i];
                                    }
                                    ctx.accumulate(0, g);
                                  });
}

Var phase_similarity(const Var& phase_t, const Var& phase_ref, PhaseScore score) {
  return tape_of(phase_t).record(
      "phase_similarity", flk::phase_similarity(phase_t.value(), phase_ref.value(), score), {phase_t, phase_ref},
      [score](BackwardContext& ctx) {
        if (score == PhaseScore::kLiteral) return;
        const Tensor& a = ctx.input(0);
        const Tensor& b = ctx.input(1);
        Tensor g(a.shape());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = -0.5 * std::sin(a[i] - b[i]) * ctx.grad_out()[i];
        ctx.accumulate(0, g);
        if (ctx.needs_grad(1)) ctx.accumulate(1, flk::scale(g, -1.0));
      });
}

Var symmetrize_spectrum(const Var& w) {
  // Averaging with the index-negated copy is self-adjoint.
  return tape_of(w).record("symmetrize_spectrum", flk::symmetrize_spectrum(w.value()), {w}, [](BackwardContext& ctx) {
    ctx.accumulate(0, flk::symmetrize_spectrum(ctx.grad_out()));
  });
}

Var autocorrelation(const Var& x) { return ifft2(real_to_complex(abs2(fft2(x)))); }

}  // namespace flk::ad
