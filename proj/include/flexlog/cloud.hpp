#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "flexlog/geometry.hpp"

namespace flexlog {

/// Pinhole intrinsics. Stored depth units times depth_scale give meters.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  double depth_scale = 0.001;

  void validate() const;
};

void to_json(nlohmann::json& j, const Intrinsics& intr);
void from_json(const nlohmann::json& j, Intrinsics& intr);

/// Row-major images: rows are v (height), columns are u (width).
using DepthImage = Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MaskImage = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Heatmap = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Points3 = Eigen::Matrix3Xd;
using Indices = std::vector<int>;

/// Camera-frame cloud with optional pixel provenance.
struct PointCloud {
  Points3 points;
  Eigen::Matrix2Xi pixels;  // (u, v) per point, empty when not image-backed
  int width = 0;
  int height = 0;
  std::vector<int> index_map;  // row-major point index per pixel, -1 where invalid

  int size() const { return static_cast<int>(points.cols()); }
  bool has_pixels() const { return pixels.cols() == points.cols() && !index_map.empty(); }
  /// Point index at pixel (u, v), or -1 when out of bounds or invalid.
  int index_at(int u, int v) const;
  bool valid(int u, int v) const { return index_at(u, v) >= 0; }
};

Vec3 back_project(const Intrinsics& intr, double u, double v, double z);

/// Nearest-integer projection; nullopt for z <= 0 or outside the image.
std::optional<Pixel> project(const Intrinsics& intr, const Vec3& p);

PointCloud depth_to_cloud(const DepthImage& depth, const Intrinsics& intr);

/// Greedy furthest point sampling starting at `seed_index`. Ties go to the
/// lowest index. With m >= n every index is returned in greedy order.
Indices farthest_point_sample(const Eigen::Ref<const Points3>& points, int m, int seed_index);

/// Index of the point closest to `center` (lowest index on ties).
int nearest_point(const Eigen::Ref<const Points3>& points, const Vec3& center);

/// All points within `radius` of `center` (inclusive), ascending index order.
/// When more than `cap` qualify the set is reduced by FPS seeded at the point
/// nearest the center, and the FPS order is returned.
Indices ball_query(const Eigen::Ref<const Points3>& points, const Vec3& center, double radius, int cap);

Points3 gather(const Eigen::Ref<const Points3>& points, const Indices& indices);

}  // namespace flexlog
