#include <random>

#include <gtest/gtest.h>

#include "flexlog/image_io.hpp"
#include "flexlog/scene.hpp"
#include "test_util.hpp"

using namespace flexlog;
using flexlog::testing::code_of;
using flexlog::testing::TempDir;

namespace {

Primitive make(PrimitiveKind kind, const Vec3& half, const Mat3& R = Mat3::Identity()) {
  Primitive p;
  p.id = 1;
  p.kind = kind;
  p.center = Vec3(0.01, -0.02, 0.5);
  p.rotation = R;
  p.half_extents = half;
  return p;
}

std::vector<Primitive> shapes() {
  const Mat3 R = (Eigen::AngleAxisd(0.4, Vec3(1, 2, 3).normalized())).toRotationMatrix();
  return {make(PrimitiveKind::Box, Vec3(0.03, 0.02, 0.01), R), make(PrimitiveKind::Cylinder, Vec3(0.02, 0.02, 0.03), R),
          make(PrimitiveKind::Sphere, Vec3::Constant(0.025))};
}

const std::pair<Scene, SceneLabels>& scene_7() {
  static const auto s = synthesize_scene(7, 4);
  return s;
}

}  // namespace

TEST(Primitive, ClipAgreesWithContains) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  for (const auto& p : shapes()) {
    for (int i = 0; i < 500; ++i) {
      const Vec3 o = p.center + 0.1 * Vec3(n(rng), n(rng), n(rng));
      const Vec3 d = (p.center + 0.02 * Vec3(n(rng), n(rng), n(rng)) - o);
      const auto hit = p.clip(o, d);
      for (int s = 0; s <= 50; ++s) {
        const double t = -1.0 + 3.0 * s / 50.0;
        const bool in = p.contains(o + t * d, 1e-12);
        const bool on = hit && t > hit->first + 1e-9 && t < hit->second - 1e-9;
        const bool off = !hit || t < hit->first - 1e-9 || t > hit->second + 1e-9;
        if (on) {
          EXPECT_TRUE(in);
        }
        if (off) {
          EXPECT_FALSE(in);
        }
      }
    }
  }
}

TEST(Primitive, SurfaceSamplesLieOnSurfaceWithOutwardNormals) {
  for (const auto& p : shapes()) {
    const SurfaceSamples s = sample_surface(p, 500, 3);
    for (int i = 0; i < 500; ++i) {
      const Vec3 q = s.points.col(i), nrm = s.normals.col(i);
      EXPECT_NEAR(nrm.norm(), 1.0, 1e-12);
      EXPECT_TRUE(p.contains(q, 1e-9));
      EXPECT_FALSE(p.contains(q + 1e-6 * nrm, 0.0));
      EXPECT_TRUE(p.contains(q - 1e-6 * nrm, 0.0));
      EXPECT_LT((p.normal_at(q) - nrm).norm(), 1e-6);
    }
  }
}

TEST(Primitive, SamplingIsSeeded) {
  const auto p = shapes()[1];
  EXPECT_EQ(sample_surface(p, 100, 4).points, sample_surface(p, 100, 4).points);
  EXPECT_NE(sample_surface(p, 100, 4).points, sample_surface(p, 100, 5).points);
}

TEST(Primitive, JsonRoundTrip) {
  for (const auto& p : shapes()) {
    const nlohmann::json j = p;
    const Primitive back = j.get<Primitive>();
    EXPECT_EQ(back.kind, p.kind);
    EXPECT_EQ(back.center, p.center);
    EXPECT_EQ(back.rotation, p.rotation);
    EXPECT_EQ(back.half_extents, p.half_extents);
  }
  EXPECT_THROW(primitive_kind_from_string("cone"), Error);
}

TEST(Rng, HelpersStayInRange) {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 10000; ++i) {
    const double u = uniform01(rng);
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    const int k = uniform_int(rng, 7);
    EXPECT_GE(k, 0);
    EXPECT_LT(k, 7);
  }
  EXPECT_EQ(mix_seed(1, 2, 3), mix_seed(1, 2, 3));
  EXPECT_NE(mix_seed(1, 2, 3), mix_seed(1, 3, 2));
}

TEST(Synthesis, LoneBoxOpposingFaces) {
  Primitive box = make(PrimitiveKind::Box, Vec3::Constant(0.03));
  const SceneLabels labels = label_objects({box}, SynthConfig{}.intrinsics, SynthConfig{});
  ASSERT_GT(labels.size(), 0u);
  int face_width = 0;
  for (const auto& g : labels.grasps) face_width += std::abs(g.width - 0.06) < 1e-9;
  EXPECT_GT(face_width, 0);
}

TEST(Synthesis, SphereLabelsCloseAtLowestGrade) {
  // radius below the deepest insertion, so some chords pass through the center
  Primitive s = make(PrimitiveKind::Sphere, Vec3::Constant(0.015));
  const SceneLabels labels = label_objects({s}, SynthConfig{}.intrinsics, SynthConfig{});
  ASSERT_GT(labels.size(), 0u);
  int through_center = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    EXPECT_LE(labels.mu_min[i], SynthConfig{}.mu_label);
    if ((labels.grasps[i].t - s.center).norm() < 1e-9) {
      ++through_center;
      EXPECT_EQ(labels.mu_min[i], 0.2);
      EXPECT_NEAR(labels.grasps[i].width, 0.03, 1e-12);
    }
  }
  EXPECT_GT(through_center, 0);
}

TEST(Synthesis, Deterministic) {
  const auto a = synthesize_scene(7, 4);
  const auto& b = scene_7();
  EXPECT_EQ(a.first.depth, b.first.depth);
  EXPECT_EQ(a.second.mask, b.second.mask);
  ASSERT_EQ(a.second.size(), b.second.size());
  EXPECT_EQ(labels_to_json(a.second), labels_to_json(b.second));
  EXPECT_NE(synthesize_scene(8, 4).first.depth, b.first.depth);
}

TEST(Synthesis, SceneContents) {
  const auto& [scene, labels] = scene_7();
  EXPECT_EQ(scene.objects.size(), 4u);
  EXPECT_EQ(scene.depth.rows(), scene.intrinsics.height);
  EXPECT_EQ((scene.depth.array() > 0).count(), scene.depth.size());
  EXPECT_GT(labels.size(), 50u);
  for (int id = 1; id <= 4; ++id) EXPECT_GT((labels.mask.array() == id).count(), 0) << "object " << id;
}

TEST(Synthesis, LabelsAreValidAndForceClosed) {
  const auto& [scene, labels] = scene_7();
  const SynthConfig config;
  const auto objects = make_eval_objects(scene.objects, config.surface_samples);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const Grasp& g = labels.grasps[i];
    EXPECT_TRUE(angles_in_range(g.theta, g.gamma, g.beta));
    EXPECT_GE(g.width, 0.0);
    EXPECT_LE(g.width, config.w_max);
    EXPECT_NEAR(g.score, 1.1 - labels.mu_min[i], 1e-12);
    EXPECT_TRUE(project(scene.intrinsics, g.t));
    const auto c = find_contacts(g, objects, config.fingers);
    ASSERT_TRUE(c);
    EXPECT_EQ(c->object_id, labels.object_ids[i]);
    EXPECT_TRUE(force_closure(*c, labels.mu_min[i]));
  }
}

TEST(Synthesis, ObjectsRestOnTheTable) {
  const auto& [scene, labels] = scene_7();
  for (std::size_t a = 0; a < scene.objects.size(); ++a) {
    for (std::size_t b = a + 1; b < scene.objects.size(); ++b) {
      const auto& pa = scene.objects[a];
      const auto& pb = scene.objects[b];
      const auto s = sample_surface(pa, 500, 1);
      for (int i = 0; i < s.points.cols(); ++i) EXPECT_FALSE(pb.contains(s.points.col(i), -1e-6));
    }
  }
}

TEST(Synthesis, Errors) {
  EXPECT_EQ(code_of([] { synthesize_scene(1, 0); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { synthesize_scene(1, 13); }), ErrorCode::InvalidArgument);
  SynthConfig tight;
  tight.table_half_x = 0.06;
  tight.table_half_y = 0.06;
  tight.min_size = 0.07;
  tight.max_size = 0.08;
  tight.max_placement_attempts = 20;
  EXPECT_EQ(code_of([&] { synthesize_scene(1, 12, tight); }), ErrorCode::PlacementFailure);
}

TEST(Synthesis, SeriesMatchesSingleScenes) {
  const auto series = synthesize_scenes(5, 3, 2);
  ASSERT_EQ(series.size(), 3u);
  const std::uint64_t s = mix_seed(5, 3);
  const auto single = synthesize_scene(s, 3 + static_cast<int>(s % 6));
  EXPECT_EQ(series[1].first.depth, single.first.depth);
  EXPECT_EQ(series[1].first.id, single.first.id);
}

TEST(SceneDir, RoundTrip) {
  TempDir tmp;
  const auto& [scene, labels] = scene_7();
  write_scene_dir(tmp / "s0", scene, labels);
  write_scene_dir(tmp / "a1", scene, labels);
  const auto [s2, l2] = read_scene_dir(tmp / "s0");
  EXPECT_EQ(s2.id, "s0");
  EXPECT_EQ(s2.depth, scene.depth);
  EXPECT_EQ(s2.intrinsics.fx, scene.intrinsics.fx);
  EXPECT_EQ(l2.mask, labels.mask);
  EXPECT_EQ(labels_to_json(l2), labels_to_json(labels));
  ASSERT_EQ(s2.objects.size(), scene.objects.size());
  EXPECT_EQ(s2.objects[0].center, scene.objects[0].center);
  const auto dirs = list_scene_dirs(tmp.path());
  ASSERT_EQ(dirs.size(), 2u);
  EXPECT_EQ(dirs[0].filename(), "a1");
}

TEST(SceneDir, MissingFiles) {
  TempDir tmp;
  EXPECT_EQ(code_of([&] { read_scene_dir(tmp / "nope"); }), ErrorCode::Io);
  EXPECT_TRUE(list_scene_dirs(tmp / "nope").empty());
}

TEST(Png, Depth16RoundTrip) {
  TempDir tmp;
  DepthImage d(5, 7);
  for (int v = 0; v < 5; ++v)
    for (int u = 0; u < 7; ++u) d(v, u) = static_cast<std::uint16_t>(v * 9000 + u * 301);
  write_png_gray16(tmp / "d.png", d);
  EXPECT_EQ(read_depth_png(tmp / "d.png"), d);
  EXPECT_EQ(read_png_gray(tmp / "d.png").bit_depth, 16);
}

TEST(Png, MaskAndHeatmap) {
  TempDir tmp;
  MaskImage m(3, 4);
  m << 0, 1, 2, 255, 4, 5, 6, 7, 8, 9, 10, 11;
  write_png_gray8(tmp / "m.png", m);
  EXPECT_EQ(read_mask_png(tmp / "m.png"), m);
  const Heatmap h = read_heatmap_png(tmp / "m.png");
  EXPECT_DOUBLE_EQ(h(0, 3), 1.0);
  EXPECT_DOUBLE_EQ(h(0, 1), 1.0 / 255.0);

  Heatmap src(2, 2);
  src << 0.0, 0.5, 1.0, 2.0;
  write_heatmap_png(tmp / "h.png", src);
  const Heatmap back = read_heatmap_png(tmp / "h.png");
  EXPECT_NEAR(back(0, 1), 0.5, 1.0 / 255.0);
  EXPECT_EQ(back(1, 1), 1.0);
  EXPECT_EQ(code_of([&] { read_png_gray(tmp / "missing.png"); }), ErrorCode::Io);
}
