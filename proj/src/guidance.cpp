#include "flexlog/guidance.hpp"

#include <algorithm>
#include <numeric>

namespace flexlog {
namespace {

RegionFrame frame_at(const PointCloud& cloud, int index) {
  RegionFrame f;
  f.center = cloud.points.col(index);
  if (cloud.has_pixels()) f.source_pixel = Pixel{cloud.pixels(0, index), cloud.pixels(1, index)};
  return f;
}

void require_pixels(const PointCloud& cloud) {
  if (!cloud.has_pixels()) {
    throw Error(ErrorCode::InvalidArgument, "guidance needs an image-backed point cloud");
  }
}

}  // namespace

std::vector<ScoredPoint> graspness_from_json(const nlohmann::json& j) {
  std::vector<ScoredPoint> out;
  for (const auto& item : j) {
    const auto& p = item.at("p");
    out.push_back({Vec3(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()),
                   item.at("score").get<double>()});
  }
  return out;
}

std::vector<RegionFrame> grid_centers(const PointCloud& cloud, int grid_px) {
  if (grid_px < 1) throw Error(ErrorCode::InvalidArgument, "grid size must be >= 1");
  require_pixels(cloud);
  std::vector<RegionFrame> out;
  for (int v0 = 0; v0 < cloud.height; v0 += grid_px) {
    const int v1 = std::min(v0 + grid_px, cloud.height);
    for (int u0 = 0; u0 < cloud.width; u0 += grid_px) {
      const int u1 = std::min(u0 + grid_px, cloud.width);
      const int uc = u0 + (u1 - u0) / 2;
      const int vc = v0 + (v1 - v0) / 2;
      int index = cloud.index_at(uc, vc);
      if (index < 0) {
        long best = -1;
        for (int v = v0; v < v1; ++v) {
          for (int u = u0; u < u1; ++u) {
            const int i = cloud.index_at(u, v);
            if (i < 0) continue;
            const long d = static_cast<long>(u - uc) * (u - uc) + static_cast<long>(v - vc) * (v - vc);
            if (best < 0 || d < best) {
              best = d;
              index = i;
            }
          }
        }
      }
      if (index >= 0) out.push_back(frame_at(cloud, index));
    }
  }
  return out;
}

std::vector<RegionFrame> centers_from_heatmap(const Heatmap& heatmap, const PointCloud& cloud, int k,
                                              int window) {
  require_pixels(cloud);
  if (heatmap.rows() != cloud.height || heatmap.cols() != cloud.width) {
    throw Error(ErrorCode::HeatmapDimMismatch, "heatmap size differs from the depth image");
  }
  if (k < 1 || window < 1) throw Error(ErrorCode::InvalidArgument, "K and window must be >= 1");
  if (!(heatmap.array() >= 0.0 && heatmap.array() <= 1.0).all()) {
    throw Error(ErrorCode::InvalidArgument, "heatmap values must lie in [0, 1]");
  }
  const int half = window / 2;

  struct Candidate {
    double value;
    int pixel;  // row-major
  };
  std::vector<Candidate> maxima;
  for (int v = 0; v < cloud.height; ++v) {
    for (int u = 0; u < cloud.width; ++u) {
      const double value = heatmap(v, u);
      if (!(value > 0.0) || !cloud.valid(u, v)) continue;
      bool is_max = true;
      for (int dv = -half; dv <= half && is_max; ++dv) {
        for (int du = -half; du <= half; ++du) {
          const int uu = u + du, vv = v + dv;
          if ((du == 0 && dv == 0) || !cloud.valid(uu, vv)) continue;
          if (heatmap(vv, uu) > value) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) maxima.push_back({value, v * cloud.width + u});
    }
  }
  std::stable_sort(maxima.begin(), maxima.end(),
                   [](const Candidate& a, const Candidate& b) { return a.value > b.value; });
  std::vector<RegionFrame> out;
  for (std::size_t i = 0; i < maxima.size() && static_cast<int>(i) < k; ++i) {
    const int u = maxima[i].pixel % cloud.width;
    const int v = maxima[i].pixel / cloud.width;
    out.push_back(frame_at(cloud, cloud.index_at(u, v)));
  }
  return out;
}

std::vector<RegionFrame> centers_from_target(const Target& target, const PointCloud& cloud, int k) {
  require_pixels(cloud);
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "K must be >= 1");

  if (const auto* click = std::get_if<Click>(&target)) {
    const int index = cloud.index_at(click->pixel.u, click->pixel.v);
    if (index < 0) throw Error(ErrorCode::EmptyTarget, "clicked pixel has no valid depth");
    return {frame_at(cloud, index)};
  }

  Indices members;
  if (const auto* box = std::get_if<BBox>(&target)) {
    if (box->u0 < 0 || box->v0 < 0 || box->u1 > cloud.width || box->v1 > cloud.height ||
        box->u0 >= box->u1 || box->v0 >= box->v1) {
      throw Error(ErrorCode::InvalidArgument, "bbox outside the image or empty");
    }
    for (int v = box->v0; v < box->v1; ++v) {
      for (int u = box->u0; u < box->u1; ++u) {
        const int i = cloud.index_at(u, v);
        if (i >= 0) members.push_back(i);
      }
    }
  } else {
    const auto& mask = std::get<MaskImage>(target);
    if (mask.rows() != cloud.height || mask.cols() != cloud.width) {
      throw Error(ErrorCode::DimensionMismatch, "mask size differs from the depth image");
    }
    for (int v = 0; v < cloud.height; ++v) {
      for (int u = 0; u < cloud.width; ++u) {
        const int i = cloud.index_at(u, v);
        if (mask(v, u) != 0 && i >= 0) members.push_back(i);
      }
    }
  }
  if (members.empty()) throw Error(ErrorCode::EmptyTarget, "target holds no valid depth");

  const Points3 pts = gather(cloud.points, members);
  const Vec3 centroid = pts.rowwise().mean();
  const Indices picked = farthest_point_sample(pts, k, nearest_point(pts, centroid));
  std::vector<RegionFrame> out;
  out.reserve(picked.size());
  for (int i : picked) out.push_back(frame_at(cloud, members[i]));
  return out;
}

std::vector<RegionFrame> centers_from_graspness(const std::vector<ScoredPoint>& points,
                                                const Intrinsics& intr, int k) {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "K must be >= 1");
  std::vector<int> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return points[a].score > points[b].score; });
  std::vector<RegionFrame> out;
  for (int i : order) {
    if (static_cast<int>(out.size()) >= k) break;
    if (!(points[i].p.z() > 0.0)) continue;
    RegionFrame f;
    f.center = points[i].p;
    f.source_pixel = project(intr, f.center);
    out.push_back(f);
  }
  return out;
}

RegionSet build_regions(const PointCloud& cloud, const std::vector<RegionFrame>& centers, double radius,
                        int n_points, int k_min) {
  if (n_points < k_min) throw Error(ErrorCode::InvalidArgument, "N must be >= k_min");
  RegionSet out;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    Indices idx;
    try {
      idx = ball_query(cloud.points, centers[c].center, radius, n_points);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoNeighbors) throw;
    }
    if (static_cast<int>(idx.size()) < k_min) {
      out.dropped.push_back(static_cast<int>(c));
      continue;
    }
    Region r;
    r.frame = centers[c];
    r.points = to_local_frame(gather(cloud.points, idx), r.frame);
    r.radius = radius;
    r.center_index = static_cast<int>(c);
    out.regions.push_back(std::move(r));
  }
  return out;
}

}  // namespace flexlog
