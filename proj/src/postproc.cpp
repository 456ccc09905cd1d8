#include "flexlog/postproc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

namespace flexlog {
namespace {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

std::vector<DecodedGrasp> decode_region(const RegionPrediction& pred, const RegionFrame& frame,
                                        const AnchorSet& anchors, const ModelConfig& config, int top_k,
                                        int region_index) {
  const int k = config.k_theta, n = config.n_anchor;
  if (pred.theta_logits.size() != k || pred.theta_residual.size() != k || pred.beta_logits.size() != n ||
      pred.gamma_logits.size() != n || pred.width_raw.size() != n * n) {
    throw Error(ErrorCode::DimensionMismatch, "prediction shapes do not match config");
  }
  Eigen::Index bin = 0;
  pred.theta_logits.maxCoeff(&bin);
  const Eigen::VectorXd e = (pred.theta_logits.array() - pred.theta_logits.maxCoeff()).exp();
  const double p_theta = e[bin] / e.sum();
  const double residual = std::clamp(pred.theta_residual[bin], -1.0, 1.0);
  const double theta = std::clamp(theta_bin_center(static_cast<int>(bin), k) + residual * std::numbers::pi / (2.0 * k),
                                  -kHalfPi, kHalfPi);
  Vec3 offset = pred.offset;
  if (offset.norm() > 1.0) offset.normalize();
  const Vec3 t = frame.center + offset * kLabelRadius;

  std::vector<DecodedGrasp> out;
  out.reserve(n * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      DecodedGrasp d;
      d.region_index = region_index;
      d.theta_bin = static_cast<int>(bin);
      d.beta_anchor = i;
      d.gamma_anchor = j;
      d.grasp.t = t;
      d.grasp.theta = theta;
      d.grasp.beta = anchors.beta[i];
      d.grasp.gamma = anchors.gamma[j];
      d.grasp.width = std::clamp(pred.width_raw[i * n + j] * config.w_max, 0.0, config.w_max);
      d.grasp.score = std::clamp(p_theta * sigmoid(pred.beta_logits[i]) * sigmoid(pred.gamma_logits[j]), 0.0, 1.0);
      out.push_back(d);
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const DecodedGrasp& a, const DecodedGrasp& b) { return a.grasp.score > b.grasp.score; });
  if (top_k >= 0 && static_cast<int>(out.size()) > top_k) out.resize(top_k);
  return out;
}

std::vector<DecodedGrasp> grasp_nms(const std::vector<DecodedGrasp>& grasps, double t_thresh, double r_thresh) {
  if (!(t_thresh > 0.0) || !(r_thresh > 0.0)) throw Error(ErrorCode::InvalidArgument, "NMS thresholds must be > 0");
  std::vector<std::size_t> order(grasps.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return grasps[a].grasp.score > grasps[b].grasp.score; });

  auto cell_of = [&](const Vec3& p) {
    return Eigen::Vector3i(static_cast<int>(std::floor(p.x() / t_thresh)), static_cast<int>(std::floor(p.y() / t_thresh)),
                           static_cast<int>(std::floor(p.z() / t_thresh)));
  };
  auto key = [](const Eigen::Vector3i& c) {
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.x())) * 73856093ULL) ^
           (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.y())) * 19349663ULL) ^
           (static_cast<std::uint64_t>(static_cast<std::uint32_t>(c.z())) * 83492791ULL);
  };
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets;  // indices into `kept`
  std::vector<DecodedGrasp> kept;
  std::vector<Mat3> kept_rot;
  for (std::size_t idx : order) {
    const Grasp& g = grasps[idx].grasp;
    const Mat3 R = g.rotation();
    const Eigen::Vector3i c = cell_of(g.t);
    bool suppressed = false;
    for (int dx = -1; dx <= 1 && !suppressed; ++dx) {
      for (int dy = -1; dy <= 1 && !suppressed; ++dy) {
        for (int dz = -1; dz <= 1 && !suppressed; ++dz) {
          const auto it = buckets.find(key(c + Eigen::Vector3i(dx, dy, dz)));
          if (it == buckets.end()) continue;
          for (std::size_t q : it->second) {
            if ((kept[q].grasp.t - g.t).norm() < t_thresh && rotation_distance(kept_rot[q], R) < r_thresh) {
              suppressed = true;
              break;
            }
          }
        }
      }
    }
    if (suppressed) continue;
    buckets[key(c)].push_back(kept.size());
    kept.push_back(grasps[idx]);
    kept_rot.push_back(R);
  }
  return kept;
}

SplicedHeatmap splice_heatmap(const std::vector<std::pair<RegionFrame, double>>& regions, int height, int width,
                              int radius_px) {
  if (height < 1 || width < 1 || radius_px < 0) throw Error(ErrorCode::InvalidArgument, "bad heatmap geometry");
  SplicedHeatmap out;
  out.map = Heatmap::Zero(height, width);
  std::set<std::pair<int, int>> painted;
  for (const auto& [frame, score] : regions) {
    if (!frame.source_pixel) throw Error(ErrorCode::MissingPixelProvenance, "region has no source pixel");
    const Pixel p = *frame.source_pixel;
    const double value = std::clamp(score, 0.0, 1.0);
    bool any = false;
    for (int v = std::max(0, p.v - radius_px); v <= std::min(height - 1, p.v + radius_px); ++v) {
      for (int u = std::max(0, p.u - radius_px); u <= std::min(width - 1, p.u + radius_px); ++u) {
        out.map(v, u) = std::max(out.map(v, u), value);
        any = true;
      }
    }
    if (any) painted.emplace(p.v, p.u);
  }
  out.painted_cells = static_cast<int>(painted.size());
  return out;
}

}  // namespace flexlog
