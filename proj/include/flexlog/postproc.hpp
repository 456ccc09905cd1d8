#pragma once

#include <utility>
#include <vector>

#include "flexlog/model.hpp"

namespace flexlog {

inline constexpr double kDefaultNmsDistance = 0.03;
inline constexpr double kDefaultNmsAngle = 30.0 * std::numbers::pi / 180.0;
inline constexpr int kDefaultTopKPerRegion = 5;

struct DecodedGrasp {
  Grasp grasp;
  int region_index = 0;
  int theta_bin = 0;
  int beta_anchor = 0;
  int gamma_anchor = 0;
};

/// Every (beta, gamma) anchor combination under the arg-max theta bin,
/// scored p_theta * p_beta * p_gamma; the best `top_k` in non-increasing
/// score order (ties keep combination order). The offset is limited to the
/// label radius.
std::vector<DecodedGrasp> decode_region(const RegionPrediction& pred, const RegionFrame& frame,
                                        const AnchorSet& anchors, const ModelConfig& config,
                                        int top_k = kDefaultTopKPerRegion, int region_index = 0);

/// Greedy suppression in descending score order (stable on ties). A grasp is
/// dropped when a kept one is closer than `t_thresh` and within `r_thresh`
/// geodesic rotation distance.
std::vector<DecodedGrasp> grasp_nms(const std::vector<DecodedGrasp>& grasps, double t_thresh = kDefaultNmsDistance,
                                    double r_thresh = kDefaultNmsAngle);

struct SplicedHeatmap {
  Heatmap map;
  int painted_cells = 0;  // distinct source pixels painted
};

/// Paints each region's score over the square of half-size `radius_px`
/// around its source pixel, keeping the maximum where squares overlap.
SplicedHeatmap splice_heatmap(const std::vector<std::pair<RegionFrame, double>>& regions, int height, int width,
                              int radius_px);

}  // namespace flexlog
