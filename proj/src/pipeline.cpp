#include "flexlog/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "flexlog/parallel.hpp"

namespace flexlog {

std::string to_string(GuidanceMode mode) {
  switch (mode) {
    case GuidanceMode::Grid: return "grid";
    case GuidanceMode::Heatmap: return "heatmap";
    case GuidanceMode::Graspness: return "graspness";
    case GuidanceMode::BBox: return "bbox";
    case GuidanceMode::Mask: return "mask";
    case GuidanceMode::Click: return "click";
  }
  return "grid";
}

GuidanceMode guidance_mode_from_string(const std::string& name) {
  for (GuidanceMode m : {GuidanceMode::Grid, GuidanceMode::Heatmap, GuidanceMode::Graspness, GuidanceMode::BBox,
                         GuidanceMode::Mask, GuidanceMode::Click}) {
    if (to_string(m) == name) return m;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown guidance mode '" + name + "'");
}

std::vector<RegionFrame> guidance_centers(const PointCloud& cloud, const Intrinsics& intr, const GuidanceInput& input,
                                          const DetectOptions& options) {
  switch (options.mode) {
    case GuidanceMode::Grid: return grid_centers(cloud, options.grid_px);
    case GuidanceMode::Heatmap: return centers_from_heatmap(input.heatmap, cloud, options.k);
    case GuidanceMode::Graspness: return centers_from_graspness(input.graspness, intr, options.k);
    case GuidanceMode::BBox:
    case GuidanceMode::Mask:
    case GuidanceMode::Click: {
      if (!input.target) throw Error(ErrorCode::InvalidArgument, to_string(options.mode) + " mode needs a target");
      const bool matches = (options.mode == GuidanceMode::BBox && std::holds_alternative<BBox>(*input.target)) ||
                           (options.mode == GuidanceMode::Mask && std::holds_alternative<MaskImage>(*input.target)) ||
                           (options.mode == GuidanceMode::Click && std::holds_alternative<Click>(*input.target));
      if (!matches) throw Error(ErrorCode::InvalidArgument, "target does not match mode " + to_string(options.mode));
      return centers_from_target(*input.target, cloud, options.k);
    }
  }
  return {};
}

DetectResult detect(const Model& model, const PointCloud& cloud, const std::vector<RegionFrame>& centers,
                    const DetectOptions& options, int workers) {
  DetectResult result;
  result.centers = static_cast<int>(centers.size());
  RegionSet set = build_regions(cloud, centers, options.radius, options.n_points);
  result.dropped = std::move(set.dropped);

  const std::size_t n = set.regions.size();
  std::vector<std::vector<DecodedGrasp>> per_region(n);
  parallel_for(
      n,
      [&](std::size_t i) {
        const Region& r = set.regions[i];
        const RegionPrediction pred =
            predict(make_encoder_plan(r.points, model.config), model.params, model.config);
        per_region[i] = decode_region(pred, r.frame, model.anchors, model.config, options.top_k_per_region,
                                      static_cast<int>(i));
      },
      workers);

  std::vector<DecodedGrasp> all;
  for (std::size_t i = 0; i < n; ++i) {
    const Region& r = set.regions[i];
    RegionSummary s;
    s.frame = r.frame;
    s.center_index = r.center_index;
    s.point_count = static_cast<int>(r.points.cols());
    s.best_score = per_region[i].empty() ? 0.0 : per_region[i].front().grasp.score;
    result.regions.push_back(s);
    all.insert(all.end(), per_region[i].begin(), per_region[i].end());
  }
  result.grasps = grasp_nms(all, options.nms_distance, options.nms_angle);
  if (options.max_grasps >= 0 && static_cast<int>(result.grasps.size()) > options.max_grasps) {
    result.grasps.resize(options.max_grasps);
  }
  return result;
}

nlohmann::json detections_to_json(const DetectResult& result) {
  nlohmann::json grasps = nlohmann::json::array();
  for (const auto& d : result.grasps) {
    nlohmann::json g = d.grasp;
    g["region_index"] = d.region_index;
    const RegionSummary& r = result.regions.at(d.region_index);
    g["region_center"] = {r.frame.center.x(), r.frame.center.y(), r.frame.center.z()};
    if (r.frame.source_pixel) g["source_pixel"] = {r.frame.source_pixel->u, r.frame.source_pixel->v};
    grasps.push_back(std::move(g));
  }
  nlohmann::json regions = nlohmann::json::array();
  for (const auto& r : result.regions) {
    nlohmann::json j{{"center", {r.frame.center.x(), r.frame.center.y(), r.frame.center.z()}},
                     {"center_index", r.center_index},
                     {"points", r.point_count},
                     {"best_score", r.best_score}};
    if (r.frame.source_pixel) j["source_pixel"] = {r.frame.source_pixel->u, r.frame.source_pixel->v};
    regions.push_back(std::move(j));
  }
  return {{"grasps", grasps}, {"regions", regions}, {"centers", result.centers}, {"dropped", result.dropped}};
}

int grid_px_for_count(int height, int width, int k) {
  if (k < 1 || height < 1 || width < 1) throw Error(ErrorCode::InvalidArgument, "K and image size must be positive");
  const double px = std::sqrt(static_cast<double>(height) * width / k);
  return std::max(1, static_cast<int>(std::lround(px)));
}

SplicedHeatmap scene_heatmap(const Model& model, const PointCloud& cloud, int k, const DetectOptions& options,
                             int workers) {
  const int grid = grid_px_for_count(cloud.height, cloud.width, k);
  const DetectResult result = detect(model, cloud, grid_centers(cloud, grid), options, workers);
  std::vector<std::pair<RegionFrame, double>> painted;
  painted.reserve(result.regions.size());
  for (const auto& r : result.regions) painted.emplace_back(r.frame, r.best_score);
  return splice_heatmap(painted, cloud.height, cloud.width, std::max(1, grid / 2));
}

std::vector<Grasp> grasps_of(const std::vector<DecodedGrasp>& decoded) {
  std::vector<Grasp> out;
  out.reserve(decoded.size());
  for (const auto& d : decoded) out.push_back(d.grasp);
  return out;
}

std::vector<Grasp> labels_as_detections(const SceneLabels& labels, const DetectOptions& options, int object_id) {
  std::vector<DecodedGrasp> all;
  for (std::size_t i = 0; i < labels.grasps.size(); ++i) {
    if (object_id > 0 && (i >= labels.object_ids.size() || labels.object_ids[i] != object_id)) continue;
    DecodedGrasp d;
    d.grasp = labels.grasps[i];
    all.push_back(d);
  }
  auto kept = grasp_nms(all, options.nms_distance, options.nms_angle);
  if (options.max_grasps >= 0 && static_cast<int>(kept.size()) > options.max_grasps) kept.resize(options.max_grasps);
  return grasps_of(kept);
}

namespace {

std::string grade_key(double g) {
  std::ostringstream os;
  os << g;
  return os.str();
}

}  // namespace

nlohmann::json eval_report_json(const std::vector<SceneEval>& scenes) {
  nlohmann::json per_scene = nlohmann::json::array();
  std::vector<double> grades, sums;
  double ap = 0.0;
  for (const auto& s : scenes) {
    nlohmann::json pg = nlohmann::json::object();
    for (std::size_t i = 0; i < s.report.grades.size(); ++i) pg[grade_key(s.report.grades[i])] = s.report.per_grade[i];
    per_scene.push_back({{"scene", s.scene_id}, {"ap", s.report.ap}, {"per_grade", pg}, {"evaluated", s.report.evaluated}});
    if (grades.empty()) {
      grades = s.report.grades;
      sums.assign(grades.size(), 0.0);
    }
    for (std::size_t i = 0; i < sums.size() && i < s.report.per_grade.size(); ++i) sums[i] += s.report.per_grade[i];
    ap += s.report.ap;
  }
  const double n = scenes.empty() ? 1.0 : static_cast<double>(scenes.size());
  nlohmann::json per_grade = nlohmann::json::object();
  for (std::size_t i = 0; i < grades.size(); ++i) per_grade[grade_key(grades[i])] = sums[i] / n;
  return {{"ap", ap / n}, {"per_grade", per_grade}, {"per_scene", per_scene}};
}

void write_eval_csv(const std::filesystem::path& path, const std::vector<SceneEval>& scenes) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f.precision(10);
  f << "scene,grade,ap\n";
  for (const auto& s : scenes) {
    for (std::size_t i = 0; i < s.report.grades.size(); ++i) {
      f << s.scene_id << ',' << s.report.grades[i] << ',' << s.report.per_grade[i] << '\n';
    }
  }
}

}  // namespace flexlog
