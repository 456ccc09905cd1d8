#include "flexlog/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <vector>

namespace flexlog {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return f;
}

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw Error(ErrorCode::Io, msg); }
void png_warn(png_structp, png_const_charp) {}

void write_rows(png_structp png, png_infop info, int width, int height, int bit_depth,
                const std::vector<png_byte>& data) {
  png_set_IHDR(png, info, width, height, bit_depth, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * (bit_depth / 8);
  for (int v = 0; v < height; ++v) {
    png_write_row(png, const_cast<png_bytep>(data.data() + v * stride));
  }
  png_write_end(png, nullptr);
}

// PNG stores 16-bit samples big-endian.
std::vector<png_byte> pack16(const DepthImage& image) {
  std::vector<png_byte> data(static_cast<std::size_t>(image.size()) * 2);
  std::size_t k = 0;
  for (Eigen::Index v = 0; v < image.rows(); ++v) {
    for (Eigen::Index u = 0; u < image.cols(); ++u) {
      data[k++] = static_cast<png_byte>(image(v, u) >> 8);
      data[k++] = static_cast<png_byte>(image(v, u) & 0xff);
    }
  }
  return data;
}

std::vector<png_byte> pack8(const MaskImage& image) {
  std::vector<png_byte> data(static_cast<std::size_t>(image.size()));
  std::copy(image.data(), image.data() + image.size(), data.begin());
  return data;
}

void write_png(const std::filesystem::path& path, int width, int height, int bit_depth,
               const std::vector<png_byte>& data) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  try {
    png_init_io(png, f.get());
    write_rows(png, info, width, height, bit_depth, data);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

}  // namespace

GrayImage read_png_gray(const std::filesystem::path& path) {
  FilePtr f = open_file(path, "rb");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  GrayImage out;
  try {
    png_init_io(png, f.get());
    png_read_info(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int color = png_get_color_type(png, info);
    int bit_depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) {
      throw Error(ErrorCode::Io, path.string() + ": expected single-channel grayscale PNG");
    }
    if (bit_depth < 8) {
      png_set_expand_gray_1_2_4_to_8(png);
      bit_depth = 8;
    }
    png_read_update_info(png, info);
    const std::size_t stride = png_get_rowbytes(png, info);
    std::vector<png_byte> row(stride);
    out.pixels.resize(height, width);
    out.bit_depth = bit_depth;
    for (int v = 0; v < height; ++v) {
      png_read_row(png, row.data(), nullptr);
      for (int u = 0; u < width; ++u) {
        out.pixels(v, u) = bit_depth == 16
                               ? static_cast<std::uint16_t>((row[2 * u] << 8) | row[2 * u + 1])
                               : static_cast<std::uint16_t>(row[u]);
      }
    }
    png_read_end(png, nullptr);
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void write_png_gray16(const std::filesystem::path& path, const DepthImage& image) {
  write_png(path, static_cast<int>(image.cols()), static_cast<int>(image.rows()), 16, pack16(image));
}

void write_png_gray8(const std::filesystem::path& path, const MaskImage& image) {
  write_png(path, static_cast<int>(image.cols()), static_cast<int>(image.rows()), 8, pack8(image));
}

DepthImage read_depth_png(const std::filesystem::path& path) { return read_png_gray(path).pixels; }

MaskImage read_mask_png(const std::filesystem::path& path) {
  const GrayImage img = read_png_gray(path);
  if (img.bit_depth != 8) throw Error(ErrorCode::Io, path.string() + ": mask must be 8-bit");
  return img.pixels.cast<std::uint8_t>();
}

Heatmap read_heatmap_png(const std::filesystem::path& path) {
  const GrayImage img = read_png_gray(path);
  const double scale = img.bit_depth == 16 ? 65535.0 : 255.0;
  return img.pixels.cast<double>() / scale;
}

void write_heatmap_png(const std::filesystem::path& path, const Heatmap& map) {
  MaskImage img(map.rows(), map.cols());
  for (Eigen::Index i = 0; i < map.size(); ++i) {
    img.data()[i] = static_cast<std::uint8_t>(std::lround(std::clamp(map.data()[i], 0.0, 1.0) * 255.0));
  }
  write_png_gray8(path, img);
}

std::string encode_png_gray8(const MaskImage& image) {
  std::string buffer;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  try {
    png_set_write_fn(
        png, &buffer,
        [](png_structp p, png_bytep data, png_size_t length) {
          auto* out = static_cast<std::string*>(png_get_io_ptr(p));
          out->append(reinterpret_cast<const char*>(data), length);
        },
        nullptr);
    write_rows(png, info, static_cast<int>(image.cols()), static_cast<int>(image.rows()), 8, pack8(image));
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
  return buffer;
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Io, path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << j.dump(1) << '\n';
}

}  // namespace flexlog
