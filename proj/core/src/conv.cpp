#include <algorithm>
#include <vector>

#include "flk/tensor.hpp"

namespace flk {

ConvSpec ConvSpec::same(std::size_t kernel, std::size_t in_channels, std::size_t out_channels, std::size_t groups,
                        std::size_t stride) {
  ConvSpec s;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = kernel / 2;
  s.groups = groups;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.has_bias = true;
  s.validate();
  return s;
}

void ConvSpec::validate() const {
  if (kernel == 0 || stride == 0 || groups == 0 || in_channels == 0 || out_channels == 0) {
    throw ShapeError("conv spec: kernel, stride, groups and channel counts must be positive");
  }
  if (in_channels % groups != 0 || out_channels % groups != 0) {
    throw ShapeError("conv spec: channels " + std::to_string(in_channels) + "->" + std::to_string(out_channels) +
                     " not divisible by groups " + std::to_string(groups));
  }
}

namespace {

struct Geometry {
  std::size_t h, w, oh, ow, cin, cout, cin_g, cout_g, k;
};

Geometry geometry(const ConvSpec& spec, std::size_t h, std::size_t w) {
  spec.validate();
  if (h + 2 * spec.padding < spec.kernel || w + 2 * spec.padding < spec.kernel) {
    throw ShapeError("conv2d: input " + std::to_string(h) + "x" + std::to_string(w) + " smaller than kernel " +
                     std::to_string(spec.kernel));
  }
  return {h,
          w,
          spec.out_size(h),
          spec.out_size(w),
          spec.in_channels,
          spec.out_channels,
          spec.in_channels / spec.groups,
          spec.out_channels / spec.groups,
          spec.kernel};
}

void check_weight(const ConvSpec& spec, const Tensor& weight) {
  if (weight.shape() != spec.weight_shape()) {
    throw ShapeError("conv2d: weight shape " + to_string(weight.shape()) + " does not match spec " +
                     to_string(spec.weight_shape()));
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const ConvSpec& spec, const Tensor& weight, const Tensor* bias) {
  require_hwc(x, "conv2d");
  if (x.dim(2) != spec.in_channels) {
    throw ShapeError("conv2d: input has " + std::to_string(x.dim(2)) + " channels, spec expects " +
                     std::to_string(spec.in_channels));
  }
  check_weight(spec, weight);
  if (bias && bias->size() != spec.out_channels) {
    throw ShapeError("conv2d: bias has " + std::to_string(bias->size()) + " entries, expected " +
                     std::to_string(spec.out_channels));
  }
  const Geometry g = geometry(spec, x.dim(0), x.dim(1));
  Tensor out({g.oh, g.ow, g.cout});
  const double* in = x.data().data();
  const double* wt = weight.data().data();
  double* o = out.data().data();

  const std::size_t taps = g.k * g.k;
  const bool dense = spec.groups == 1;
  const bool depthwise = g.cin_g == 1 && g.cout_g == 1;
  // Dense and depthwise kernels are re-laid out as [tap][ci][co] so the inner
  // loop runs over contiguous output channels.
  std::vector<double> wt_t;
  if (dense || depthwise) {
    wt_t.resize(weight.size());
    for (std::size_t co = 0; co < g.cout; ++co)
      for (std::size_t t = 0; t < taps; ++t)
        for (std::size_t ci = 0; ci < g.cin_g; ++ci)
          wt_t[(t * g.cin_g + ci) * g.cout + co] = wt[(co * taps + t) * g.cin_g + ci];
  }

  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      double* op = o + (oy * g.ow + ox) * g.cout;
      if (bias) std::copy_n(bias->data().data(), g.cout, op);
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * spec.stride + ky) -
                                  static_cast<std::ptrdiff_t>(spec.padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * spec.stride + kx) -
                                    static_cast<std::ptrdiff_t>(spec.padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          const double* ip = in + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.cin;
          const std::size_t t = ky * g.k + kx;
          if (dense) {
            for (std::size_t ci = 0; ci < g.cin; ++ci) {
              const double xv = ip[ci];
              const double* wr = wt_t.data() + (t * g.cin + ci) * g.cout;
              for (std::size_t co = 0; co < g.cout; ++co) op[co] += xv * wr[co];
            }
          } else if (depthwise) {
            const double* wr = wt_t.data() + t * g.cout;
            for (std::size_t co = 0; co < g.cout; ++co) op[co] += ip[co] * wr[co];
          } else {
            for (std::size_t co = 0; co < g.cout; ++co) {
              const std::size_t grp = co / g.cout_g;
              const double* wp = wt + (co * taps + t) * g.cin_g;
              const double* ig = ip + grp * g.cin_g;
              double acc = 0.0;
              for (std::size_t ci = 0; ci < g.cin_g; ++ci) acc += wp[ci] * ig[ci];
              op[co] += acc;
            }
          }
        }
      }
    }
  }
  return out;
}

Tensor conv2d_grad_input(const Tensor& grad_out, const ConvSpec& spec, const Tensor& weight, std::size_t in_h,
                         std::size_t in_w) {
  check_weight(spec, weight);
  const Geometry g = geometry(spec, in_h, in_w);
  if (grad_out.shape() != Shape{g.oh, g.ow, g.cout}) throw ShapeError("conv2d_grad_input: gradient shape mismatch");
  Tensor gin({in_h, in_w, g.cin});
  const double* go = grad_out.data().data();
  const double* wt = weight.data().data();
  double* gi = gin.data().data();

  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      const double* gp = go + (oy * g.ow + ox) * g.cout;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * spec.stride + ky) -
                                  static_cast<std::ptrdiff_t>(spec.padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * spec.stride + kx) -
                                    static_cast<std::ptrdiff_t>(spec.padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          double* ip = gi + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.cin;
          for (std::size_t co = 0; co < g.cout; ++co) {
            const double gv = gp[co];
            if (gv == 0.0) continue;
            const std::size_t grp = co / g.cout_g;
            const double* wp = wt + ((co * g.k + ky) * g.k + kx) * g.cin_g;
            double* ig = ip + grp * g.cin_g;
            for (std::size_t ci = 0; ci < g.cin_g; ++ci) ig[ci] += gv * wp[ci];
          }
        }
      }
    }
  }
  return gin;
}

Tensor conv2d_grad_weight(const Tensor& grad_out, const Tensor& x, const ConvSpec& spec) {
  const Geometry g = geometry(spec, x.dim(0), x.dim(1));
  Tensor gw(spec.weight_shape());
  const double* go = grad_out.data().data();
  const double* in = x.data().data();
  double* gwp = gw.data().data();

  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      const double* gp = go + (oy * g.ow + ox) * g.cout;
      for (std::size_t ky = 0; ky < g.k; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * spec.stride + ky) -
                                  static_cast<std::ptrdiff_t>(spec.padding);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kx = 0; kx < g.k; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * spec.stride + kx) -
                                    static_cast<std::ptrdiff_t>(spec.padding);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          const double* ip = in + (static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix)) * g.cin;
          for (std::size_t co = 0; co < g.cout; ++co) {
            const double gv = gp[co];
            if (gv == 0.0) continue;
            const std::size_t grp = co / g.cout_g;
            double* wp = gwp + ((co * g.k + ky) * g.k + kx) * g.cin_g;
            const double* ig = ip + grp * g.cin_g;
            for (std::size_t ci = 0; ci < g.cin_g; ++ci) wp[ci] += gv * ig[ci];
          }
        }
      }
    }
  }
  return gw;
}

Tensor conv2d_grad_bias(const Tensor& grad_out) {
  const std::size_t c = grad_out.shape().back();
  Tensor gb({c});
  for (std::size_t i = 0; i < grad_out.size(); ++i) gb[i % c] += grad_out[i];
  return gb;
}

}  // namespace flk
