#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flexlog/eval.hpp"
#include "flexlog/guidance.hpp"
#include "flexlog/postproc.hpp"
#include "flexlog/train.hpp"

namespace flexlog {

enum class GuidanceMode { Grid, Heatmap, Graspness, BBox, Mask, Click };

std::string to_string(GuidanceMode mode);
GuidanceMode guidance_mode_from_string(const std::string& name);

struct DetectOptions {
  GuidanceMode mode = GuidanceMode::Grid;
  int k = kDefaultRegionCount;
  int grid_px = kDefaultGridPx;
  double radius = kDefaultRegionRadius;
  int n_points = kDefaultRegionPoints;
  int top_k_per_region = kDefaultTopKPerRegion;
  double nms_distance = kDefaultNmsDistance;
  double nms_angle = kDefaultNmsAngle;
  int max_grasps = 50;
};

/// Mode-specific guidance payload.
struct GuidanceInput {
  Heatmap heatmap;
  std::vector<ScoredPoint> graspness;
  std::optional<Target> target;
};

std::vector<RegionFrame> guidance_centers(const PointCloud& cloud, const Intrinsics& intr, const GuidanceInput& input,
                                          const DetectOptions& options);

struct RegionSummary {
  RegionFrame frame;
  int center_index = 0;
  int point_count = 0;
  double best_score = 0.0;
};

struct DetectResult {
  std::vector<DecodedGrasp> grasps;  // NMS'd, descending score, at most max_grasps
  std::vector<RegionSummary> regions;
  std::vector<int> dropped;  // center indices without enough points
  int centers = 0;
};

/// Regions -> model -> decode -> NMS. Region work fans out over `workers`
/// threads; the result does not depend on the count.
DetectResult detect(const Model& model, const PointCloud& cloud, const std::vector<RegionFrame>& centers,
                    const DetectOptions& options, int workers = 0);

nlohmann::json detections_to_json(const DetectResult& result);

/// Grid spacing that yields about `k` centers on a height x width image.
int grid_px_for_count(int height, int width, int k);

/// Grid guidance at about `k` centers; each region paints its best score
/// over a square of half the grid spacing.
SplicedHeatmap scene_heatmap(const Model& model, const PointCloud& cloud, int k, const DetectOptions& options,
                             int workers = 0);

std::vector<Grasp> grasps_of(const std::vector<DecodedGrasp>& decoded);

/// Ground-truth labels ranked by score and NMS'd like detections. A positive
/// `object_id` keeps only that object's labels.
std::vector<Grasp> labels_as_detections(const SceneLabels& labels, const DetectOptions& options, int object_id = 0);

struct SceneEval {
  std::string scene_id;
  APReport report;
};

/// {"ap", "per_grade": {grade: value}, "per_scene": [...]}; ap and per-grade
/// values are means over scenes.
nlohmann::json eval_report_json(const std::vector<SceneEval>& scenes);
/// One row per (scene, grade).
void write_eval_csv(const std::filesystem::path& path, const std::vector<SceneEval>& scenes);

}  // namespace flexlog
