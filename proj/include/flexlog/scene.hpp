#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "flexlog/cloud.hpp"
#include "flexlog/eval.hpp"
#include "flexlog/primitives.hpp"

namespace flexlog {

struct Scene {
  std::string id;
  Intrinsics intrinsics;
  DepthImage depth;
  std::vector<Primitive> objects;  // empty for captured scenes
};

/// Camera-frame grasp annotations of one scene. `mask` holds the object id
/// per pixel (0 for background).
struct SceneLabels {
  std::vector<Grasp> grasps;
  std::vector<int> object_ids;
  std::vector<double> mu_min;
  MaskImage mask;

  std::size_t size() const { return grasps.size(); }
};

struct SynthConfig {
  Intrinsics intrinsics{240.0, 240.0, 128.0, 96.0, 256, 192, 1e-4};
  double camera_distance = 0.6;
  double camera_tilt = 30.0 * std::numbers::pi / 180.0;  // from vertical
  double table_half_x = 0.17;
  double table_half_y = 0.13;
  double min_size = 0.02;  // edge lengths, radii and heights are drawn from [min_size, max_size]
  double max_size = 0.08;
  double placement_gap = 0.005;
  int max_placement_attempts = 400;

  double mu_label = 0.4;
  double w_max = kDefaultMaxWidth;
  int surface_samples = kDefaultSurfaceSamples;
  int approach_steps = 12;
  double min_approach_z = 0.3;
  std::vector<double> insertion_depths{0.01, 0.02};
  FrictionGrades grades;
  FingerModel fingers;
};

/// Random primitives resting on a table, ray-cast depth, and antipodal
/// ground-truth grasps verified with the force-closure evaluator. Fully
/// determined by `seed`.
std::pair<Scene, SceneLabels> synthesize_scene(std::uint64_t seed, int object_count, const SynthConfig& config = {});

/// Scenes `first` .. `first + count - 1` of a seeded series; scene i uses
/// mix_seed(seed, i) and 3 to 8 objects.
std::vector<std::pair<Scene, SceneLabels>> synthesize_scenes(std::uint64_t seed, int count, int first = 0,
                                                             const SynthConfig& config = {});

/// Antipodal grasp labels for `objects` (camera frame); contacts are checked
/// against all objects so clutter rejects blocked candidates.
SceneLabels label_objects(const std::vector<Primitive>& objects, const Intrinsics& intr, const SynthConfig& config);

/// Depth and instance mask by ray casting `objects` above a plane
/// {p : normal . p = offset} in the camera frame.
std::pair<DepthImage, MaskImage> render_depth(const std::vector<Primitive>& objects, const Vec3& plane_normal,
                                              double plane_offset, const Intrinsics& intr);

nlohmann::json labels_to_json(const SceneLabels& labels);
SceneLabels labels_from_json(const nlohmann::json& j);

/// Scene directory: depth.png, intrinsics.json, and when available
/// labels.json, mask.png, objects.json.
void write_scene_dir(const std::filesystem::path& dir, const Scene& scene, const SceneLabels& labels);
std::pair<Scene, SceneLabels> read_scene_dir(const std::filesystem::path& dir);

/// Sorted subdirectories of `root` that contain a depth.png.
std::vector<std::filesystem::path> list_scene_dirs(const std::filesystem::path& root);

}  // namespace flexlog
