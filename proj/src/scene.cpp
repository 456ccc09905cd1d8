#include "flexlog/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "flexlog/image_io.hpp"
#include "flexlog/parallel.hpp"

namespace flexlog {
namespace {

struct PinchLine {
  Vec3 origin;  // midway between the pinched faces
  Vec3 axis;
};

Vec3 any_perpendicular(const Vec3& a) {
  const Vec3 helper = std::abs(a.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  return a.cross(helper).normalized();
}

std::vector<PinchLine> pinch_lines(const Primitive& prim, double w_max) {
  std::vector<PinchLine> lines;
  const Mat3& R = prim.rotation;
  const Vec3& h = prim.half_extents;
  const double fractions[3] = {-0.5, 0.0, 0.5};
  switch (prim.kind) {
    case PrimitiveKind::Box:
      for (int k = 0; k < 3; ++k) {
        if (2.0 * h[k] > w_max) continue;
        const int m = (k + 1) % 3, n = (k + 2) % 3;
        for (double fm : fractions) {
          for (double fn : fractions) {
            const Vec3 origin = prim.center + R.col(m) * fm * std::max(h[m] - 0.005, 0.0) +
                                R.col(n) * fn * std::max(h[n] - 0.005, 0.0);
            lines.push_back({origin, R.col(k)});
          }
        }
      }
      break;
    case PrimitiveKind::Cylinder: {
      const double r = h.x();
      const Vec3 u = R.col(2);
      if (2.0 * r <= w_max) {
        for (double f : fractions) {
          const Vec3 origin = prim.center + u * f * std::max(h.z() - 0.005, 0.0);
          for (int k = 0; k < 6; ++k) {
            const double psi = k * std::numbers::pi / 6.0;
            lines.push_back({origin, R.col(0) * std::cos(psi) + R.col(1) * std::sin(psi)});
          }
        }
      }
      if (2.0 * h.z() <= w_max) {
        lines.push_back({prim.center, u});
        for (int k = 0; k < 4; ++k) {
          const double psi = k * std::numbers::pi / 2.0;
          lines.push_back({prim.center + 0.5 * r * (R.col(0) * std::cos(psi) + R.col(1) * std::sin(psi)), u});
        }
      }
      break;
    }
    case PrimitiveKind::Sphere: {
      if (2.0 * h.x() > w_max) break;
      // Fibonacci directions over the half sphere x >= 0 (axis sign is free).
      const int count = 24;
      const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
      for (int i = 0; i < count; ++i) {
        const double x = (i + 0.5) / count;
        const double s = std::sqrt(1.0 - x * x);
        const double phi = golden * i;
        lines.push_back({prim.center, Vec3(x, s * std::cos(phi), s * std::sin(phi))});
      }
      break;
    }
  }
  return lines;
}

Mat3 camera_from_world(double distance, double tilt, Vec3& eye) {
  eye = Vec3(0.0, -distance * std::sin(tilt), distance * std::cos(tilt));
  const Vec3 z = (-eye).normalized();
  const Vec3 x = z.cross(Vec3::UnitZ()).normalized();
  const Vec3 y = z.cross(x);
  Mat3 R;
  R.row(0) = x.transpose();
  R.row(1) = y.transpose();
  R.row(2) = z.transpose();
  return R;
}

}  // namespace

std::pair<DepthImage, MaskImage> render_depth(const std::vector<Primitive>& objects, const Vec3& plane_normal,
                                              double plane_offset, const Intrinsics& intr) {
  DepthImage depth = DepthImage::Zero(intr.height, intr.width);
  MaskImage mask = MaskImage::Zero(intr.height, intr.width);
  for (int v = 0; v < intr.height; ++v) {
    for (int u = 0; u < intr.width; ++u) {
      const Vec3 d((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
      double best = std::numeric_limits<double>::infinity();
      int label = 0;
      const double denom = plane_normal.dot(d);
      if (std::abs(denom) > 1e-12) {
        const double t = plane_offset / denom;
        if (t > 0.0) best = t;
      }
      for (const auto& obj : objects) {
        const auto hit = obj.clip(Vec3::Zero(), d);
        if (hit && hit->first > 1e-9 && hit->first < best) {
          best = hit->first;
          label = obj.id;
        }
      }
      if (!std::isfinite(best)) continue;
      const double units = std::round(best / intr.depth_scale);
      depth(v, u) = static_cast<std::uint16_t>(std::clamp(units, 0.0, 65535.0));
      mask(v, u) = static_cast<std::uint8_t>(label);
    }
  }
  return {depth, mask};
}

SceneLabels label_objects(const std::vector<Primitive>& objects, const Intrinsics& intr, const SynthConfig& config) {
  const std::vector<EvalObject> eval_objects = make_eval_objects(objects, config.surface_samples);
  SceneLabels labels;
  for (const auto& prim : objects) {
    for (const auto& line : pinch_lines(prim, config.w_max)) {
      const Vec3 a = line.axis.normalized();
      const Vec3 b1 = any_perpendicular(a);
      const Vec3 b2 = a.cross(b1);
      for (int k = 0; k < config.approach_steps; ++k) {
        const double phi = 2.0 * std::numbers::pi * k / config.approach_steps;
        const Vec3 d = std::cos(phi) * b1 + std::sin(phi) * b2;
        if (d.z() < config.min_approach_z) continue;
        const auto R = gripper_rotation(a, d);
        if (!R) continue;
        EulerAngles e;
        try {
          e = rotation_to_euler(*R);
        } catch (const Error&) {
          continue;
        }
        const auto exit = prim.clip(line.origin, -d);
        if (!exit) continue;
        double last_shift = -1.0;
        for (double depth : config.insertion_depths) {
          const double shift = std::max(0.0, exit->second - depth);
          if (shift == last_shift) continue;
          last_shift = shift;
          const Vec3 t = line.origin - shift * d;
          const auto chord = prim.clip(t, a);
          if (!chord) continue;
          const double width = chord->second - chord->first;
          if (width > config.w_max || !project(intr, t)) continue;

          Grasp g;
          g.t = t;
          g.theta = e.theta;
          g.gamma = e.gamma;
          g.beta = e.beta;
          g.width = width;
          const auto contacts = find_contacts(g, eval_objects, config.fingers);
          if (!contacts || contacts->object_id != prim.id) continue;
          const auto mu = min_friction_grade(*contacts, config.grades);
          if (!mu || *mu > config.mu_label + 1e-12) continue;
          g.score = std::clamp(1.1 - *mu, 0.0, 1.0);
          labels.grasps.push_back(g);
          labels.object_ids.push_back(prim.id);
          labels.mu_min.push_back(*mu);
        }
      }
    }
  }
  return labels;
}

constexpr int kPlacementRestarts = 20;

std::pair<Scene, SceneLabels> synthesize_scene(std::uint64_t seed, int object_count, const SynthConfig& config) {
  if (object_count < 1 || object_count > 12) {
    throw Error(ErrorCode::InvalidArgument, "object_count must be in [1, 12]");
  }
  config.intrinsics.validate();
  std::mt19937_64 rng(mix_seed(seed, 0x5ce7e));
  Vec3 eye;
  const Mat3 cam_R = camera_from_world(config.camera_distance, config.camera_tilt, eye);

  struct Footprint {
    double x, y, r;
  };
  std::vector<Footprint> placed;
  std::vector<Primitive> objects;
  for (int layout = 0; layout < kPlacementRestarts && static_cast<int>(objects.size()) < object_count; ++layout) {
    placed.clear();
    objects.clear();
    for (int i = 0; i < object_count; ++i) {
      Primitive p;
      p.id = i + 1;
      p.kind = static_cast<PrimitiveKind>(uniform_int(rng, 3));
      const double lo = config.min_size, hi = config.max_size;
      Mat3 world_R = Mat3::Identity();
      double lift = 0.0, footprint = 0.0;
      const double yaw = uniform(rng, 0.0, 2.0 * std::numbers::pi);
      const Mat3 yaw_R = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
      switch (p.kind) {
        case PrimitiveKind::Box: {
          p.half_extents = 0.5 * Vec3(uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi));
          world_R = yaw_R;
          lift = p.half_extents.z();
          footprint = p.half_extents.head<2>().norm();
          break;
        }
        case PrimitiveKind::Cylinder: {
          const double r = 0.5 * uniform(rng, lo, hi);
          const double hh = 0.5 * uniform(rng, lo, hi);
          p.half_extents = Vec3(r, r, hh);
          if (uniform01(rng) < 0.5) {
            world_R = yaw_R;
            lift = hh;
            footprint = r;
          } else {
            world_R = yaw_R * Eigen::AngleAxisd(std::numbers::pi / 2.0, Vec3::UnitX()).toRotationMatrix();
            lift = r;
            footprint = std::hypot(r, hh);
          }
          break;
        }
        case PrimitiveKind::Sphere: {
          const double r = 0.5 * uniform(rng, lo, hi);
          p.half_extents = Vec3(r, r, r);
          lift = r;
          footprint = r;
          break;
        }
      }
      bool ok = false;
      Footprint f{};
      for (int attempt = 0; attempt < config.max_placement_attempts && !ok; ++attempt) {
        f = {uniform(rng, -config.table_half_x + footprint, config.table_half_x - footprint),
             uniform(rng, -config.table_half_y + footprint, config.table_half_y - footprint), footprint};
        ok = std::all_of(placed.begin(), placed.end(), [&](const Footprint& o) {
          return std::hypot(o.x - f.x, o.y - f.y) >= o.r + f.r + config.placement_gap;
        });
      }
      if (!ok) break;
      placed.push_back(f);
      p.center = cam_R * (Vec3(f.x, f.y, lift) - eye);
      p.rotation = cam_R * world_R;
      objects.push_back(p);
    }
  }
  if (static_cast<int>(objects.size()) < object_count) {
    throw Error(ErrorCode::PlacementFailure, "could not place object " + std::to_string(objects.size() + 1));
  }

  Scene scene;
  scene.id = "synthetic_" + std::to_string(seed);
  scene.intrinsics = config.intrinsics;
  scene.objects = objects;
  const Vec3 plane_normal = cam_R * Vec3::UnitZ();
  auto [depth, mask] = render_depth(objects, plane_normal, -eye.z(), config.intrinsics);
  scene.depth = std::move(depth);

  SceneLabels labels = label_objects(objects, config.intrinsics, config);
  labels.mask = std::move(mask);
  return {std::move(scene), std::move(labels)};
}

nlohmann::json labels_to_json(const SceneLabels& labels) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    nlohmann::json g = labels.grasps[i];
    g["object_id"] = labels.object_ids[i];
    g["mu_min"] = labels.mu_min[i];
    out.push_back(std::move(g));
  }
  return out;
}

SceneLabels labels_from_json(const nlohmann::json& j) {
  SceneLabels labels;
  for (const auto& item : j) {
    labels.grasps.push_back(item.get<Grasp>());
    labels.object_ids.push_back(item.value("object_id", 0));
    labels.mu_min.push_back(item.value("mu_min", 1.1 - labels.grasps.back().score));
  }
  return labels;
}

void write_scene_dir(const std::filesystem::path& dir, const Scene& scene, const SceneLabels& labels) {
  std::filesystem::create_directories(dir);
  write_png_gray16(dir / "depth.png", scene.depth);
  write_json(dir / "intrinsics.json", scene.intrinsics);
  write_json(dir / "labels.json", labels_to_json(labels));
  if (labels.mask.size() > 0) write_png_gray8(dir / "mask.png", labels.mask);
  if (!scene.objects.empty()) write_json(dir / "objects.json", scene.objects);
}

std::pair<Scene, SceneLabels> read_scene_dir(const std::filesystem::path& dir) {
  Scene scene;
  scene.id = dir.filename().string();
  if (scene.id.empty()) scene.id = dir.parent_path().filename().string();
  scene.intrinsics = read_json(dir / "intrinsics.json").get<Intrinsics>();
  scene.depth = read_depth_png(dir / "depth.png");
  if (scene.depth.rows() != scene.intrinsics.height || scene.depth.cols() != scene.intrinsics.width) {
    throw Error(ErrorCode::DimensionMismatch, dir.string() + ": depth.png does not match intrinsics");
  }
  SceneLabels labels;
  if (std::filesystem::exists(dir / "labels.json")) labels = labels_from_json(read_json(dir / "labels.json"));
  if (std::filesystem::exists(dir / "mask.png")) labels.mask = read_mask_png(dir / "mask.png");
  if (std::filesystem::exists(dir / "objects.json")) {
    scene.objects = read_json(dir / "objects.json").get<std::vector<Primitive>>();
  }
  return {std::move(scene), std::move(labels)};
}

std::vector<std::filesystem::path> list_scene_dirs(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(root)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(root)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "depth.png")) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::pair<Scene, SceneLabels>> synthesize_scenes(std::uint64_t seed, int count, int first,
                                                             const SynthConfig& config) {
  if (count < 0 || first < 0) throw Error(ErrorCode::InvalidArgument, "scene range must be non-negative");
  std::vector<std::pair<Scene, SceneLabels>> out(count);
  parallel_for(out.size(), [&](std::size_t j) {
    const std::uint64_t s = mix_seed(seed, first + j);
    out[j] = synthesize_scene(s, 3 + static_cast<int>(s % 6), config);
  });
  return out;
}

}  // namespace flexlog
