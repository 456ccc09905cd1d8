#include "flexlog/cloud.hpp"

#include <cmath>
#include <limits>

namespace flexlog {

void Intrinsics::validate() const {
  if (!(fx > 0.0 && fy > 0.0) || width <= 0 || height <= 0 || !(depth_scale > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "intrinsics need fx, fy, width, height, depth_scale > 0");
  }
}

void to_json(nlohmann::json& j, const Intrinsics& intr) {
  j = nlohmann::json{{"fx", intr.fx},       {"fy", intr.fy},         {"cx", intr.cx},
                     {"cy", intr.cy},       {"width", intr.width},   {"height", intr.height},
                     {"depth_scale", intr.depth_scale}};
}

void from_json(const nlohmann::json& j, Intrinsics& intr) {
  intr.fx = j.at("fx").get<double>();
  intr.fy = j.at("fy").get<double>();
  intr.cx = j.at("cx").get<double>();
  intr.cy = j.at("cy").get<double>();
  intr.width = j.at("width").get<int>();
  intr.height = j.at("height").get<int>();
  intr.depth_scale = j.at("depth_scale").get<double>();
  intr.validate();
}

int PointCloud::index_at(int u, int v) const {
  if (u < 0 || v < 0 || u >= width || v >= height || index_map.empty()) return -1;
  return index_map[static_cast<std::size_t>(v) * width + u];
}

Vec3 back_project(const Intrinsics& intr, double u, double v, double z) {
  return Vec3((u - intr.cx) * z / intr.fx, (v - intr.cy) * z / intr.fy, z);
}

std::optional<Pixel> project(const Intrinsics& intr, const Vec3& p) {
  if (!(p.z() > 0.0)) return std::nullopt;
  const double u = intr.fx * p.x() / p.z() + intr.cx;
  const double v = intr.fy * p.y() / p.z() + intr.cy;
  const long ui = std::lround(u);
  const long vi = std::lround(v);
  if (ui < 0 || vi < 0 || ui >= intr.width || vi >= intr.height) return std::nullopt;
  return Pixel{static_cast<int>(ui), static_cast<int>(vi)};
}

PointCloud depth_to_cloud(const DepthImage& depth, const Intrinsics& intr) {
  intr.validate();
  if (depth.rows() != intr.height || depth.cols() != intr.width) {
    throw Error(ErrorCode::DimensionMismatch, "depth image does not match intrinsics");
  }
  PointCloud cloud;
  cloud.width = intr.width;
  cloud.height = intr.height;
  cloud.index_map.assign(static_cast<std::size_t>(intr.width) * intr.height, -1);

  const auto valid = (depth.array() > 0).count();
  cloud.points.resize(3, valid);
  cloud.pixels.resize(2, valid);
  int n = 0;
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const std::uint16_t d = depth(v, u);
      if (d == 0) continue;
      const double z = d * intr.depth_scale;
      cloud.points.col(n) = back_project(intr, u, v, z);
      cloud.pixels.col(n) << u, v;
      cloud.index_map[static_cast<std::size_t>(v) * intr.width + u] = n;
      ++n;
    }
  }
  return cloud;
}

Indices farthest_point_sample(const Eigen::Ref<const Points3>& points, int m, int seed_index) {
  const int n = static_cast<int>(points.cols());
  if (n < 1) throw Error(ErrorCode::EmptyInput, "farthest_point_sample on empty input");
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "farthest_point_sample needs m >= 1");
  if (seed_index < 0 || seed_index >= n) {
    throw Error(ErrorCode::InvalidArgument, "seed index out of range");
  }
  const int count = std::min(m, n);
  Indices picked;
  picked.reserve(count);
  // min squared distance to the selected set; -1 marks selected points
  Eigen::VectorXd min_dist = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
  int current = seed_index;
  for (int step = 0; step < count; ++step) {
    picked.push_back(current);
    min_dist[current] = -1.0;
    if (step + 1 == count) break;
    const Vec3 c = points.col(current);
    int best = -1;
    double best_dist = -1.0;
    for (int i = 0; i < n; ++i) {
      if (min_dist[i] < 0.0) continue;
      const double dx = points(0, i) - c.x();
      const double dy = points(1, i) - c.y();
      const double dz = points(2, i) - c.z();
      const double d = dx * dx + dy * dy + dz * dz;
      if (d < min_dist[i]) min_dist[i] = d;
      if (min_dist[i] > best_dist) {
        best_dist = min_dist[i];
        best = i;
      }
    }
    current = best;
  }
  return picked;
}

int nearest_point(const Eigen::Ref<const Points3>& points, const Vec3& center) {
  if (points.cols() == 0) throw Error(ErrorCode::EmptyInput, "nearest_point on empty input");
  Eigen::Index best = 0;
  (points.colwise() - center).colwise().squaredNorm().minCoeff(&best);
  return static_cast<int>(best);
}

Indices ball_query(const Eigen::Ref<const Points3>& points, const Vec3& center, double radius, int cap) {
  if (!(radius > 0.0) || cap < 1) {
    throw Error(ErrorCode::InvalidArgument, "ball_query needs radius > 0 and cap >= 1");
  }
  const double r2 = radius * radius;
  Indices inside;
  for (int i = 0; i < points.cols(); ++i) {
    if ((points.col(i) - center).squaredNorm() <= r2) inside.push_back(i);
  }
  if (inside.empty()) throw Error(ErrorCode::NoNeighbors, "no points inside the query ball");
  if (static_cast<int>(inside.size()) <= cap) return inside;

  const Points3 subset = gather(points, inside);
  const Indices local = farthest_point_sample(subset, cap, nearest_point(subset, center));
  Indices out;
  out.reserve(local.size());
  for (int i : local) out.push_back(inside[i]);
  return out;
}

Points3 gather(const Eigen::Ref<const Points3>& points, const Indices& indices) {
  Points3 out(3, static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) out.col(i) = points.col(indices[i]);
  return out;
}

}  // namespace flexlog
