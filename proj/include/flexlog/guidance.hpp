#pragma once

#include <string>
#include <variant>
#include <vector>

#include "flexlog/cloud.hpp"

namespace flexlog {

inline constexpr int kDefaultGridPx = 12;
inline constexpr int kDefaultRegionCount = 48;
inline constexpr double kDefaultRegionRadius = 0.08;
inline constexpr int kDefaultRegionPoints = 512;
inline constexpr int kMinRegionPoints = 32;

/// Half-open pixel rectangle [u0, u1) x [v0, v1).
struct BBox {
  int u0 = 0;
  int v0 = 0;
  int u1 = 0;
  int v1 = 0;
};

struct Click {
  Pixel pixel;
};

using Target = std::variant<BBox, MaskImage, Click>;

struct ScoredPoint {
  Vec3 p = Vec3::Zero();
  double score = 0.0;
};

std::vector<ScoredPoint> graspness_from_json(const nlohmann::json& j);

/// Local region in the region frame.
struct Region {
  RegionFrame frame;
  Points3 points;
  double radius = 0.0;
  int center_index = 0;  // position in the list of centers it was built from
};

struct RegionSet {
  std::vector<Region> regions;
  std::vector<int> dropped;  // center indices that did not yield a region
};

/// One center per grid cell: the cell's middle pixel, or the nearest valid
/// pixel inside the cell when the middle has no depth.
std::vector<RegionFrame> grid_centers(const PointCloud& cloud, int grid_px);

/// Top-K valid pixels by confidence after local-max suppression with a
/// `window` x `window` neighborhood. Ties resolve in row-major order.
std::vector<RegionFrame> centers_from_heatmap(const Heatmap& heatmap, const PointCloud& cloud, int k,
                                              int window = 3);

/// Click gives one center at the clicked point; bbox and mask give up to K
/// FPS-spread centers over the target's points.
std::vector<RegionFrame> centers_from_target(const Target& target, const PointCloud& cloud, int k);

/// Top-K scored points (stable by input order on ties). Points at z <= 0
/// are skipped; the source pixel is the point's projection when inside.
std::vector<RegionFrame> centers_from_graspness(const std::vector<ScoredPoint>& points,
                                                const Intrinsics& intr, int k);

RegionSet build_regions(const PointCloud& cloud, const std::vector<RegionFrame>& centers, double radius,
                        int n_points, int k_min = kMinRegionPoints);

}  // namespace flexlog
