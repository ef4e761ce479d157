#include <algorithm>

#include "flk/tensor.hpp"

namespace flk {

Tensor window_partition(const Tensor& x, std::size_t window) {
  require_hwc(x, "window_partition");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  if (window == 0 || h % window != 0 || w % window != 0) {
    throw ShapeError("window_partition: " + std::to_string(h) + "x" + std::to_string(w) +
                     " is not divisible by window " + std::to_string(window) + "; pad the input first");
  }
  const std::size_t wy = h / window, wx = w / window, area = window * window;
  Tensor out({wy * wx, area, c});
  for (std::size_t by = 0; by < wy; ++by)
    for (std::size_t bx = 0; bx < wx; ++bx)
      for (std::size_t r = 0; r < window; ++r) {
        const double* src = x.data().data() + ((by * window + r) * w + bx * window) * c;
        double* dst = out.data().data() + ((by * wx + bx) * area + r * window) * c;
        std::copy_n(src, window * c, dst);
      }
  return out;
}

Tensor window_merge(const Tensor& windows, std::size_t h, std::size_t w) {
  if (windows.rank() != 3) throw ShapeError("window_merge: expected [nWin, M*M, C], got " + to_string(windows.shape()));
  const std::size_t n = windows.dim(0), area = windows.dim(1), c = windows.dim(2);
  std::size_t window = 1;
  while (window * window < area) ++window;
  if (window * window != area || n * area != h * w || h % window != 0 || w % window != 0) {
    throw ShapeError("window_merge: " + to_string(windows.shape()) + " does not tile " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  const std::size_t wx = w / window;
  Tensor out({h, w, c});
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t by = b / wx, bx = b % wx;
    for (std::size_t r = 0; r < window; ++r) {
      const double* src = windows.data().data() + (b * area + r * window) * c;
      double* dst = out.data().data() + ((by * window + r) * w + bx * window) * c;
      std::copy_n(src, window * c, dst);
    }
  }
  return out;
}

namespace {

void check_qk(const Tensor& q, const Tensor& k, std::size_t heads, const char* op) {
  if (q.rank() != 3 || q.shape() != k.shape()) {
    throw ShapeError(std::string(op) + ": expected matching [nWin, L, C] operands, got " + to_string(q.shape()) +
                     " and " + to_string(k.shape()));
  }
  if (heads == 0 || q.dim(2) % heads != 0) {
    throw ShapeError(std::string(op) + ": " + std::to_string(q.dim(2)) + " channels not divisible by " +
                     std::to_string(heads) + " heads");
  }
}

}  // namespace

Tensor attn_scores(const Tensor& q, const Tensor& k, std::size_t heads, double scale) {
  check_qk(q, k, heads, "attn_scores");
  const std::size_t n = q.dim(0), len = q.dim(1), c = q.dim(2), d = c / heads;
  Tensor s({n, heads, len, len});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t hd = 0; hd < heads; ++hd)
      for (std::size_t i = 0; i < len; ++i) {
        const double* qi = q.data().data() + (b * len + i) * c + hd * d;
        double* row = s.data().data() + ((b * heads + hd) * len + i) * len;
        for (std::size_t j = 0; j < len; ++j) {
          const double* kj = k.data().data() + (b * len + j) * c + hd * d;
          double acc = 0.0;
          for (std::size_t e = 0; e < d; ++e) acc += qi[e] * kj[e];
          row[j] = acc * scale;
        }
      }
  return s;
}

void attn_scores_grad(const Tensor& grad, const Tensor& q, const Tensor& k, std::size_t heads, double scale,
                      Tensor& grad_q, Tensor& grad_k) {
  check_qk(q, k, heads, "attn_scores_grad");
  const std::size_t n = q.dim(0), len = q.dim(1), c = q.dim(2), d = c / heads;
  grad_q = Tensor(q.shape());
  grad_k = Tensor(k.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t hd = 0; hd < heads; ++hd)
      for (std::size_t i = 0; i < len; ++i) {
        const double* row = grad.data().data() + ((b * heads + hd) * len + i) * len;
        const double* qi = q.data().data() + (b * len + i) * c + hd * d;
        double* gqi = grad_q.data().data() + (b * len + i) * c + hd * d;
        for (std::size_t j = 0; j < len; ++j) {
          const double g = row[j] * scale;
          const double* kj = k.data().data() + (b * len + j) * c + hd * d;
          double* gkj = grad_k.data().data() + (b * len + j) * c + hd * d;
          for (std::size_t e = 0; e < d; ++e) {
            gqi[e] += g * kj[e];
            gkj[e] += g * qi[e];
          }
        }
      }
}

std::size_t rel_bias_index(std::size_t i, std::size_t j, std::size_t window) {
  const std::size_t span = 2 * window - 1;
  const std::size_t dy = i / window + window - 1 - j / window;
  const std::size_t dx = i % window + window - 1 - j % window;
  return dy * span + dx;
}

Tensor add_rel_bias(const Tensor& scores, const Tensor& table, std::size_t window) {
  const std::size_t area = window * window, span = 2 * window - 1;
  if (scores.rank() != 4 || scores.dim(2) != area || scores.dim(3) != area) {
    throw ShapeError("add_rel_bias: scores " + to_string(scores.shape()) + " do not match window " +
                     std::to_string(window));
  }
  const std::size_t heads = scores.dim(1);
  if (table.shape() != Shape{heads, span * span}) {
    throw ShapeError("add_rel_bias: table " + to_string(table.shape()) + " expected " +
                     to_string(Shape{heads, span * span}));
  }
  Tensor out(scores.shape());
  for (std::size_t b = 0; b < scores.dim(0); ++b)
    for (std::size_t hd = 0; hd < heads; ++hd)
      for (std::size_t i = 0; i < area; ++i)
        for (std::size_t j = 0; j < area; ++j) {
          const std::size_t at = ((b * heads + hd) * area + i) * area + j;
          out[at] = scores[at] + table[hd * span * span + rel_bias_index(i, j, window)];
        }
  return out;
}

Tensor rel_bias_table_grad(const Tensor& grad, std::size_t heads, std::size_t window) {
  const std::size_t area = window * window, span = 2 * window - 1;
  Tensor gt({heads, span * span});
  for (std::size_t b = 0; b < grad.dim(0); ++b)
    for (std::size_t hd = 0; hd < heads; ++hd)
      for (std::size_t i = 0; i < area; ++i)
        for (std::size_t j = 0; j < area; ++j)
          gt[hd * span * span + rel_bias_index(i, j, window)] += grad[((b * heads + hd) * area + i) * area + j];
  return gt;
}

namespace {

void check_apply(const Tensor& probs, const Tensor& v, std::size_t heads) {
  if (v.rank() != 3 || probs.rank() != 4 || probs.dim(0) != v.dim(0) || probs.dim(1) != heads ||
      probs.dim(2) != v.dim(1) || probs.dim(3) != v.dim(1) || v.dim(2) % heads != 0) {
    throw ShapeError("attn_apply: probabilities " + to_string(probs.shape()) + " incompatible with values " +
                     to_string(v.shape()) + " for " + std::to_string(heads) + " heads");
  }
}

}  // namespace

Tensor attn_apply(const Tensor& probs, const Tensor& v, std::size_t heads) {
  check_apply(probs, v, heads);
  const std::size_t n = v.dim(0), len = v.dim(1), c = v.dim(2), d = c / heads;
  Tensor out(v.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t hd = 0; hd < heads; ++hd)
      for (std::size_t i = 0; i < len; ++i) {
        const double* row = probs.data().data() + ((b * heads + hd) * len + i) * len;
        double* oi = out.data().data() + (b * len + i) * c + hd * d;
        for (std::size_t j = 0; j < len; ++j) {
          const double p = row[j];
          const double* vj = v.data().data() + (b * len + j) * c + hd * d;
          for (std::size_t e = 0; e < d; ++e) oi[e] += p * vj[e];
        }
      }
  return out;
}

void attn_apply_grad(const Tensor& grad, const Tensor& probs, const Tensor& v, std::size_t heads, Tensor& grad_probs,
                     Tensor& grad_v) {
  check_apply(probs, v, heads);
  const std::size_t n = v.dim(0), len = v.dim(1), c = v.dim(2), d = c / heads;
  grad_probs = Tensor(probs.shape());
  grad_v = Tensor(v.shape());
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t hd = 0; hd < heads; ++hd)
      for (std::size_t i = 0; i < len; ++i) {
        const double* row = probs.data().data() + ((b * heads + hd) * len + i) * len;
        double* grow = grad_probs.data().data() + ((b * heads + hd) * len + i) * len;
        const double* gi = grad.data().data() + (b * len + i) * c + hd * d;
        for (std::size_t j = 0; j < len; ++j) {
          const double* vj = v.data().data() + (b * len + j) * c + hd * d;
          double* gvj = grad_v.data().data() + (b * len + j) * c + hd * d;
          double acc = 0.0;
          for (std::size_t e = 0; e < d; ++e) {
            acc += gi[e] * vj[e];
            gvj[e] += row[j] * gi[e];
          }
          grow[j] = acc;
        }
      }
}

}  // namespace flk
