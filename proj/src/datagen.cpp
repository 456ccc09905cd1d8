#include "flexlog/datagen.hpp"

#include <algorithm>
#include <cmath>

#include "flexlog/parallel.hpp"

namespace flexlog {
namespace {

Heatmap label_kernel_map(const std::vector<Pixel>& pixels, int height, int width, double sigma_k) {
  Heatmap map = Heatmap::Zero(height, width);
  const int reach = static_cast<int>(std::ceil(5.0 * sigma_k));
  const double inv = 1.0 / (2.0 * sigma_k * sigma_k);
  std::vector<Pixel> unique = pixels;
  std::sort(unique.begin(), unique.end(), [](const Pixel& a, const Pixel& b) {
    return a.v != b.v ? a.v < b.v : a.u < b.u;
  });
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  for (const Pixel& p : unique) {
    for (int v = std::max(0, p.v - reach); v <= std::min(height - 1, p.v + reach); ++v) {
      for (int u = std::max(0, p.u - reach); u <= std::min(width - 1, p.u + reach); ++u) {
        const double d2 = static_cast<double>((u - p.u) * (u - p.u) + (v - p.v) * (v - p.v));
        map(v, u) = std::max(map(v, u), std::exp(-d2 * inv));
      }
    }
  }
  return map;
}

}  // namespace

RegionalGrasp RegionLabel::regional() const {
  RegionalGrasp g;
  g.dt = dt.cast<double>();
  g.theta = theta;
  g.gamma = gamma;
  g.beta = beta;
  g.width = width;
  return g;
}

bool same_record(const RegionSample& a, const RegionSample& b) {
  return a.frame.center == b.frame.center && a.points.cols() == b.points.cols() && a.points == b.points &&
         a.labels == b.labels;
}

void DatagenConfig::validate() const {
  if (!(sigma_k > 0.0) || !(sigma_blur > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigmas must be > 0");
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::InvalidArgument, "threshold must be in (0,1)");
  if (!(noise_frac >= 0.0 && noise_frac < 1.0)) throw Error(ErrorCode::InvalidArgument, "noise_frac must be in [0,1)");
  if (cell_px < 1) throw Error(ErrorCode::InvalidArgument, "cell_px must be >= 1");
  if (!(region_radius >= 0.06 && region_radius <= 0.12)) {
    throw Error(ErrorCode::InvalidArgument, "region radius must be in [0.06, 0.12] m");
  }
  if (n_points < k_min || k_min < 1) throw Error(ErrorCode::InvalidArgument, "need 1 <= k_min <= n_points");
}

nlohmann::json to_json_stats(const DatagenStats& s) {
  return {{"scenes", s.scenes},
          {"centers", s.centers},
          {"regions", s.regions},
          {"labeled_regions", s.labeled_regions},
          {"labels", s.labels},
          {"noise_centers", s.noise_centers},
          {"dropped_centers", s.dropped_centers},
          {"invalid_fraction", s.invalid_fraction()}};
}

std::vector<Pixel> project_to_planar(const SceneLabels& labels, const Intrinsics& intr, double min_score) {
  std::vector<Pixel> out;
  for (const auto& g : labels.grasps) {
    if (g.score < min_score) continue;
    if (const auto px = project(intr, g.t)) out.push_back(*px);
  }
  return out;
}

Heatmap gaussian_blur(const Heatmap& map, double sigma) {
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigma must be > 0");
  const int r = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * r + 1);
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) sum += kernel[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
  for (double& k : kernel) k /= sum;

  const Eigen::Index h = map.rows(), w = map.cols();
  Heatmap tmp = Heatmap::Zero(h, w);
  for (Eigen::Index v = 0; v < h; ++v) {
    for (Eigen::Index u = 0; u < w; ++u) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const Eigen::Index uu = u + i;
        if (uu >= 0 && uu < w) acc += kernel[i + r] * map(v, uu);
      }
      tmp(v, u) = acc;
    }
  }
  Heatmap out = Heatmap::Zero(h, w);
  for (Eigen::Index v = 0; v < h; ++v) {
    for (Eigen::Index u = 0; u < w; ++u) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) {
        const Eigen::Index vv = v + i;
        if (vv >= 0 && vv < h) acc += kernel[i + r] * tmp(vv, u);
      }
      out(v, u) = acc;
    }
  }
  return out;
}

Heatmap render_label_heatmap(const std::vector<Pixel>& pixels, int height, int width, double sigma_k,
                             double sigma_blur) {
  if (!(sigma_k > 0.0) || !(sigma_blur > 0.0)) throw Error(ErrorCode::InvalidArgument, "sigmas must be > 0");
  if (height < 1 || width < 1) throw Error(ErrorCode::InvalidArgument, "heatmap size must be positive");
  if (pixels.empty()) return Heatmap::Zero(height, width);
  Heatmap map = gaussian_blur(label_kernel_map(pixels, height, width, sigma_k), sigma_blur);
  const double peak = map.maxCoeff();
  if (peak > 0.0) map /= peak;
  return map;
}

std::vector<LabelCenter> sample_label_centers(const Heatmap& heatmap, const PointCloud& cloud, int cell_px,
                                              double threshold, double noise_frac, std::uint64_t rng_seed) {
  if (cell_px < 1) throw Error(ErrorCode::InvalidArgument, "cell_px must be >= 1");
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(ErrorCode::InvalidArgument, "threshold must be in (0,1)");
  if (!(noise_frac >= 0.0 && noise_frac < 1.0)) throw Error(ErrorCode::InvalidArgument, "noise_frac must be in [0,1)");
  if (heatmap.rows() != cloud.height || heatmap.cols() != cloud.width) {
    throw Error(ErrorCode::HeatmapDimMismatch, "heatmap does not match the image size");
  }
  std::vector<LabelCenter> out;
  const int cells_x = (cloud.width + cell_px - 1) / cell_px;
  const int cells_y = (cloud.height + cell_px - 1) / cell_px;
  for (int cy = 0; cy < cells_y; ++cy) {
    for (int cx = 0; cx < cells_x; ++cx) {
      const int u0 = cx * cell_px, v0 = cy * cell_px;
      const int u1 = std::min(cloud.width, u0 + cell_px), v1 = std::min(cloud.height, v0 + cell_px);
      std::vector<Pixel> valid;
      Pixel best{};
      double best_value = -1.0;
      for (int v = v0; v < v1; ++v) {
        for (int u = u0; u < u1; ++u) {
          if (!cloud.valid(u, v)) continue;
          valid.push_back({u, v});
          if (heatmap(v, u) > best_value) {
            best_value = heatmap(v, u);
            best = {u, v};
          }
        }
      }
      if (valid.empty()) continue;
      if (best_value >= threshold) out.push_back({best, false});
      std::mt19937_64 rng(mix_seed(rng_seed, static_cast<std::uint64_t>(cy * cells_x + cx), 0x6e015eULL));
      if (uniform01(rng) < noise_frac) {
        out.push_back({valid[uniform_int(rng, static_cast<int>(valid.size()))], true});
      }
    }
  }
  return out;
}

RegionSample make_region_sample(const PointCloud& cloud, const SceneLabels& labels, const RegionFrame& frame,
                                double radius, int n_points, int k_min) {
  if (!(radius >= 0.06 && radius <= 0.12)) {
    throw Error(ErrorCode::InvalidArgument, "region radius must be in [0.06, 0.12] m");
  }
  Indices idx;
  try {
    idx = ball_query(cloud.points, frame.center, radius, n_points);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NoNeighbors) throw;
  }
  if (static_cast<int>(idx.size()) < k_min) {
    throw Error(ErrorCode::EmptyRegion, "region has " + std::to_string(idx.size()) + " points");
  }
  RegionSample s;
  s.frame = frame;
  s.points = to_local_frame(gather(cloud.points, idx), frame).cast<float>();
  for (const auto& g : labels.grasps) {
    const Eigen::Vector3f dt = (g.t - frame.center).cast<float>();
    if (dt.cast<double>().norm() > kLabelRadius) continue;
    RegionLabel l;
    l.dt = dt;
    l.theta = static_cast<float>(g.theta);
    l.gamma = static_cast<float>(g.gamma);
    l.beta = static_cast<float>(g.beta);
    l.width = static_cast<float>(g.width);
    l.score = static_cast<float>(g.score);
    s.labels.push_back(l);
  }
  return s;
}

Dataset generate_dataset(const std::vector<std::pair<Scene, SceneLabels>>& scenes, const DatagenConfig& config) {
  config.validate();
  struct PerScene {
    std::vector<RegionSample> samples;
    DatagenStats stats;
  };
  std::vector<PerScene> parts(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) {
    const auto& [scene, labels] = scenes[i];
    const PointCloud cloud = depth_to_cloud(scene.depth, scene.intrinsics);
    const auto pixels = project_to_planar(labels, scene.intrinsics, config.min_label_score);
    const Heatmap heat = render_label_heatmap(pixels, cloud.height, cloud.width, config.sigma_k, config.sigma_blur);
    const auto centers = sample_label_centers(heat, cloud, config.cell_px, config.threshold, config.noise_frac,
                                              mix_seed(config.seed, i));
    PerScene& part = parts[i];
    part.stats.scenes = 1;
    part.stats.centers = static_cast<int>(centers.size());
    for (const auto& c : centers) {
      RegionFrame frame;
      frame.center = cloud.points.col(cloud.index_at(c.pixel.u, c.pixel.v));
      frame.source_pixel = c.pixel;
      try {
        part.samples.push_back(
            make_region_sample(cloud, labels, frame, config.region_radius, config.n_points, config.k_min));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::EmptyRegion) throw;
        ++part.stats.dropped_centers;
        continue;
      }
      const auto& s = part.samples.back();
      ++part.stats.regions;
      if (c.noise) ++part.stats.noise_centers;
      if (!s.labels.empty()) ++part.stats.labeled_regions;
      part.stats.labels += static_cast<long long>(s.labels.size());
    }
  });

  Dataset out;
  for (auto& part : parts) {
    for (auto& s : part.samples) out.samples.push_back(std::move(s));
    out.stats.scenes += part.stats.scenes;
    out.stats.centers += part.stats.centers;
    out.stats.regions += part.stats.regions;
    out.stats.labeled_regions += part.stats.labeled_regions;
    out.stats.labels += part.stats.labels;
    out.stats.noise_centers += part.stats.noise_centers;
    out.stats.dropped_centers += part.stats.dropped_centers;
  }
  return out;
}

}  // namespace flexlog
