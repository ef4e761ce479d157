#pragma once

#include <cstdint>
#include <filesystem>

#include "flk/tensor.hpp"

namespace flk {

/// value * 255 rounded half away from zero, clamped to [0, 255].
std::uint8_t to_u8(double value);
double from_u8(std::uint8_t value);

/// 8-bit RGB images as H x W x 3 tensors in [0, 1]. Grayscale and alpha PNGs
/// are expanded or flattened to RGB on read.
Tensor read_png(const std::filesystem::path& path);
void write_png(const Tensor& image, const std::filesystem::path& path);
Tensor read_ppm(const std::filesystem::path& path);
void write_ppm(const Tensor& image, const std::filesystem::path& path);

/// Dispatches on the extension (.png, .ppm).
Tensor read_image(const std::filesystem::path& path);
void write_image(const Tensor& image, const std::filesystem::path& path);

struct HeatmapRange {
  double min = 0.0;
  double max = 0.0;
};

/// 8-bit grayscale PNG of a single-channel map after min-max normalization.
/// The range is also written to `<path>.range.txt` so values stay recoverable.
HeatmapRange write_heatmap(const Tensor& map, const std::filesystem::path& path);

}  // namespace flk
