#include "flk/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

namespace flk {

std::uint8_t to_u8(double value) {
  const double scaled = std::round(value * 255.0);  // std::round is half away from zero
  return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

double from_u8(std::uint8_t value) { return static_cast<double>(value) / 255.0; }

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

void require_rgb(const Tensor& image, const char* op) {
  require_hwc(image, op);
  if (image.shape()[2] != 3) throw ShapeError(std::string(op) + ": expected 3 channels, got " + to_string(image.shape()));
}

std::vector<png_byte> pack_rgb(const Tensor& image) {
  std::vector<png_byte> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) bytes[i] = to_u8(image[i]);
  return bytes;
}

// Decodes any PNG to packed 8-bit RGB.
std::vector<png_byte> read_png_bytes(const std::filesystem::path& path, png_uint_32& width, png_uint_32& height) {
  FilePtr file = open_file(path, "rb");
  png_byte sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw ParseError(path.string() + " is not a PNG file");
  }
  std::string error;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  if (!png) throw IoError("libpng: cannot create read struct");
  png_infop info = png_create_info_struct(png);
  std::vector<png_byte> bytes;
  std::vector<png_bytep> rows;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError("libpng: " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);

  width = png_get_image_width(png, info);
  height = png_get_image_height(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  if (stride != static_cast<std::size_t>(width) * 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw ParseError(path.string() + ": unsupported PNG layout");
  }
  bytes.resize(stride * height);
  rows.resize(height);
  for (png_uint_32 y = 0; y < height; ++y) rows[y] = bytes.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return bytes;
}

void write_png_bytes(const std::filesystem::path& path, const std::vector<png_byte>& bytes, std::size_t width,
                     std::size_t height, int color_type, std::size_t channels) {
  FilePtr file = open_file(path, "wb");
  std::string error;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error, png_fail, png_warn);
  if (!png) throw IoError("libpng: cannot create write struct");
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows(height);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng: " + path.string() + ": " + error);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (std::size_t y = 0; y < height; ++y) rows[y] = const_cast<png_bytep>(bytes.data() + y * width * channels);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor read_png(const std::filesystem::path& path) {
  png_uint_32 width = 0, height = 0;
  const auto bytes = read_png_bytes(path, width, height);
  Tensor image(Shape{height, width, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) image[i] = from_u8(bytes[i]);
  return image;
}

void write_png(const Tensor& image, const std::filesystem::path& path) {
  require_rgb(image, "write_png");
  write_png_bytes(path, pack_rgb(image), image.shape()[1], image.shape()[0], PNG_COLOR_TYPE_RGB, 3);
}

namespace {

// Skips whitespace and '#' comments between PPM header fields.
std::size_t read_ppm_field(std::istream& in, const std::filesystem::path& path) {
  for (;;) {
    const int ch = in.peek();
    if (ch == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  std::size_t v = 0;
  if (!(in >> v)) throw ParseError(path.string() + ": malformed PPM header");
  return v;
}

}  // namespace

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6') throw ParseError(path.string() + " is not a binary PPM (P6)");
  const std::size_t width = read_ppm_field(in, path);
  const std::size_t height = read_ppm_field(in, path);
  const std::size_t maxval = read_ppm_field(in, path);
  if (maxval != 255) throw ParseError(path.string() + ": only 8-bit PPM (maxval 255) is supported");
  if (width == 0 || height == 0) throw ParseError(path.string() + ": empty image");
  in.get();  // single whitespace before the raster
  std::vector<unsigned char> bytes(width * height * 3);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw ParseError(path.string() + ": truncated PPM raster");
  Tensor image(Shape{height, width, 3});
  for (std::size_t i = 0; i < bytes.size(); ++i) image[i] = from_u8(bytes[i]);
  return image;
}

void write_ppm(const Tensor& image, const std::filesystem::path& path) {
  require_rgb(image, "write_ppm");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "P6\n" << image.shape()[1] << ' ' << image.shape()[0] << "\n255\n";
  const auto bytes = pack_rgb(image);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

namespace {

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return ext;
}

}  // namespace

Tensor read_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return read_png(path);
  if (ext == ".ppm") return read_ppm(path);
  throw ParseError("unsupported image extension '" + ext + "' for " + path.string());
}

void write_image(const Tensor& image, const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return write_png(image, path);
  if (ext == ".ppm") return write_ppm(image, path);
  throw ParseError("unsupported image extension '" + ext + "' for " + path.string());
}

HeatmapRange write_heatmap(const Tensor& map, const std::filesystem::path& path) {
  if (map.empty()) throw ShapeError("write_heatmap: empty map");
  const std::size_t h = map.dim(0);
  const std::size_t w = map.rank() > 1 ? map.dim(1) : 1;
  if (map.size() != h * w) throw ShapeError("write_heatmap: expected a single-channel map, got " + to_string(map.shape()));
  const auto [lo, hi] = std::minmax_element(map.data().begin(), map.data().end());
  HeatmapRange range{*lo, *hi};
  const double span = range.max - range.min;
  std::vector<png_byte> bytes(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) bytes[i] = to_u8(span > 0.0 ? (map[i] - range.min) / span : 0.0);
  write_png_bytes(path, bytes, w, h, PNG_COLOR_TYPE_GRAY, 1);

  std::ofstream sidecar(path.string() + ".range.txt", std::ios::trunc);
  if (!sidecar) throw IoError("cannot write heatmap range for " + path.string());
  sidecar.precision(17);
  sidecar << "min " << range.min << "\nmax " << range.max << "\nvalue = min + (pixel / 255) * (max - min)\n";
  return range;
}

}  // namespace flk
