#pragma once

#include <filesystem>
#include <string>

#include "flexlog/cloud.hpp"

namespace flexlog {

/// Single-channel PNG contents widened to 16 bits, plus the stored depth.
struct GrayImage {
  DepthImage pixels;
  int bit_depth = 16;
};

GrayImage read_png_gray(const std::filesystem::path& path);
void write_png_gray16(const std::filesystem::path& path, const DepthImage& image);
void write_png_gray8(const std::filesystem::path& path, const MaskImage& image);

DepthImage read_depth_png(const std::filesystem::path& path);
MaskImage read_mask_png(const std::filesystem::path& path);

/// 8- or 16-bit map normalized by the bit depth's maximum.
Heatmap read_heatmap_png(const std::filesystem::path& path);
/// Values clamped to [0,1] and scaled by 255.
void write_heatmap_png(const std::filesystem::path& path, const Heatmap& map);

/// PNG encoded to memory (8-bit gray).
std::string encode_png_gray8(const MaskImage& image);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace flexlog
