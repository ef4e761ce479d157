#include "flk/blocks.hpp"

#include <string>

namespace flk {

namespace {

void check_attention_shape(std::size_t h, std::size_t w, std::size_t c, std::size_t window, std::size_t heads) {
  if (window == 0 || heads == 0 || c == 0) throw ShapeError("flops_report: window, heads and channels must be positive");
  if (c % heads != 0) {
    throw ShapeError("flops_report: " + std::to_string(c) + " channels not divisible by " + std::to_string(heads) +
                     " heads");
  }
  if (h % (2 * window) != 0 || w % (2 * window) != 0) {
    throw ShapeError("flops_report: " + std::to_string(h) + "x" + std::to_string(w) +
                     " must be divisible by twice the window " + std::to_string(window));
  }
}

// QK^T and attn * V inside M x M windows: each of the N tokens meets M^2
// partners, once per channel of every head.
std::uint64_t window_core(std::uint64_t tokens, std::uint64_t window, std::uint64_t c) {
  return 2 * tokens * window * window * c;
}

}  // namespace

FlopReport flops_report(std::size_t height, std::size_t width, std::size_t channels, std::size_t window,
                        std::size_t heads) {
  check_attention_shape(height, width, channels, window, heads);
  const std::uint64_t hw = static_cast<std::uint64_t>(height) * width;
  const std::uint64_t c = channels, m = window;

  FlopReport r;
  r.height = height;
  r.width = width;
  r.channels = channels;
  r.window = window;
  r.heads = heads;

  r.wmha.attention_core = window_core(hw, m, c);
  r.wmha.qkv_projection = 3 * hw * c * c;
  r.wmha.merge_projection = hw * c * c;

  const std::uint64_t quarter = hw / 4;
  r.wdam.attention_core = window_core(quarter, m, c);
  r.wdam.qkv_projection = 3 * quarter * c * c;
  r.wdam.merge_projection = quarter * c * c;
  r.wdam.modulation_conv = quarter * c * 9 * 2;    // grouped 3x3, two inputs per output channel
  r.wdam.wavelet_transforms = 2 * hw * c * 4;      // analysis and synthesis, 4 taps per coefficient
  r.wdam.high_band_conv = quarter * 9 * (3 * c) * (3 * c);
  r.wdam.output_projection = hw * c * c;

  r.core_ratio = static_cast<double>(r.wdam.attention_core) / static_cast<double>(r.wmha.attention_core);
  r.branch_ratio = static_cast<double>(r.wdam.branch()) / static_cast<double>(r.wmha.branch());
  r.total_ratio = static_cast<double>(r.wdam.total()) / static_cast<double>(r.wmha.total());
  return r;
}

}  // namespace flk
