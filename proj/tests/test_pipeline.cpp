#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "flexlog/pipeline.hpp"
#include "test_util.hpp"

using namespace flexlog;
using flexlog::testing::code_of;
using flexlog::testing::TempDir;

namespace {

struct Fixture {
  Scene scene;
  SceneLabels labels;
  PointCloud cloud;
  Model model;
};

const Fixture& fixture() {
  static const Fixture f = [] {
    Fixture out;
    std::tie(out.scene, out.labels) = synthesize_scene(21, 5);
    out.cloud = depth_to_cloud(out.scene.depth, out.scene.intrinsics);
    out.model.config = small_model_config();
    out.model.params = init_params(out.model.config, 2);
    out.model.anchors = uniform_anchors(7);
    return out;
  }();
  return f;
}

Pixel pixel_on(const MaskImage& mask, int id) {
  // pixel of `id` farthest from the object's boundary along its row
  Pixel best{-1, -1};
  int best_run = -1;
  for (int v = 0; v < mask.rows(); ++v) {
    int start = -1;
    for (int u = 0; u <= mask.cols(); ++u) {
      const bool in = u < mask.cols() && mask(v, u) == id;
      if (in && start < 0) start = u;
      if (!in && start >= 0) {
        if (u - start > best_run) {
          best_run = u - start;
          best = {(start + u) / 2, v};
        }
        start = -1;
      }
    }
  }
  return best;
}

}  // namespace

TEST(Modes, StringRoundTrip) {
  for (auto m : {GuidanceMode::Grid, GuidanceMode::Heatmap, GuidanceMode::Graspness, GuidanceMode::BBox,
                 GuidanceMode::Mask, GuidanceMode::Click}) {
    EXPECT_EQ(guidance_mode_from_string(to_string(m)), m);
  }
  EXPECT_EQ(code_of([] { guidance_mode_from_string("lasso"); }), ErrorCode::InvalidArgument);
}

TEST(Modes, GridSpacingForCount) {
  EXPECT_EQ(grid_px_for_count(192, 256, 48), 32);
  EXPECT_EQ(grid_px_for_count(192, 256, 12), 64);
  EXPECT_EQ(grid_px_for_count(192, 256, 192), 16);
  EXPECT_EQ(grid_px_for_count(4, 4, 1000), 1);
  EXPECT_EQ(code_of([] { grid_px_for_count(10, 10, 0); }), ErrorCode::InvalidArgument);
}

TEST(Modes, TargetMustMatchMode) {
  const auto& f = fixture();
  DetectOptions o;
  o.mode = GuidanceMode::Click;
  EXPECT_EQ(code_of([&] { guidance_centers(f.cloud, f.scene.intrinsics, {}, o); }), ErrorCode::InvalidArgument);
  GuidanceInput in;
  in.target = BBox{0, 0, 10, 10};
  EXPECT_EQ(code_of([&] { guidance_centers(f.cloud, f.scene.intrinsics, in, o); }), ErrorCode::InvalidArgument);
  o.mode = GuidanceMode::BBox;
  o.k = 3;
  EXPECT_EQ(guidance_centers(f.cloud, f.scene.intrinsics, in, o).size(), 3u);
  o.mode = GuidanceMode::Heatmap;
  in.heatmap = Heatmap::Zero(f.cloud.height, f.cloud.width);
  in.heatmap(40, 50) = 1.0;
  o.k = 1;
  const auto c = guidance_centers(f.cloud, f.scene.intrinsics, in, o);
  ASSERT_EQ(c.size(), 1u);
  EXPECT_EQ(*c[0].source_pixel, (Pixel{50, 40}));
}

TEST(Detect, GridResultIsRankedAndSuppressed) {
  const auto& f = fixture();
  DetectOptions o;
  o.grid_px = 32;
  o.max_grasps = 30;
  const auto centers = grid_centers(f.cloud, o.grid_px);
  const DetectResult r = detect(f.model, f.cloud, centers, o);
  EXPECT_EQ(r.centers, static_cast<int>(centers.size()));
  EXPECT_EQ(r.regions.size() + r.dropped.size(), centers.size());
  ASSERT_FALSE(r.grasps.empty());
  EXPECT_LE(r.grasps.size(), 30u);
  for (std::size_t i = 0; i < r.grasps.size(); ++i) {
    const auto& g = r.grasps[i];
    if (i > 0) {
      EXPECT_GE(r.grasps[i - 1].grasp.score, g.grasp.score);
    }
    ASSERT_LT(g.region_index, static_cast<int>(r.regions.size()));
    EXPECT_LE((g.grasp.t - r.regions[g.region_index].frame.center).norm(), kLabelRadius + 1e-12);
    EXPECT_LE(g.grasp.score, r.regions[g.region_index].best_score);
  }
}

TEST(Detect, IndependentOfWorkerCount) {
  const auto& f = fixture();
  DetectOptions o;
  o.grid_px = 48;
  const auto centers = grid_centers(f.cloud, o.grid_px);
  const auto a = detections_to_json(detect(f.model, f.cloud, centers, o, 1));
  const auto b = detections_to_json(detect(f.model, f.cloud, centers, o, 3));
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.contains("grasps"));
  EXPECT_TRUE(a.contains("regions"));
  EXPECT_EQ(a["centers"].get<int>(), static_cast<int>(centers.size()));
  EXPECT_TRUE(a["grasps"][0].contains("source_pixel"));
}

TEST(Detect, ClickLocality) {
  const auto& f = fixture();
  DetectOptions o;
  o.mode = GuidanceMode::Click;
  for (int id = 1; id <= 5; ++id) {
    const Pixel p = pixel_on(f.labels.mask, id);
    ASSERT_GE(p.u, 0);
    GuidanceInput in;
    in.target = Click{p};
    const auto centers = guidance_centers(f.cloud, f.scene.intrinsics, in, o);
    const Vec3 clicked = f.cloud.points.col(f.cloud.index_at(p.u, p.v));
    const DetectResult r = detect(f.model, f.cloud, centers, o);
    ASSERT_FALSE(r.grasps.empty());
    for (const auto& g : r.grasps) EXPECT_LE((g.grasp.t - clicked).norm(), o.radius + 0.02);
  }
}

TEST(Detect, HeatmapSpliceMonotoneInK) {
  const auto& f = fixture();
  int prev = 0;
  for (int k : {12, 48, 192}) {
    const SplicedHeatmap s = scene_heatmap(f.model, f.cloud, k, DetectOptions{});
    EXPECT_GE(s.painted_cells, prev) << "K=" << k;
    EXPECT_GE(s.map.minCoeff(), 0.0);
    EXPECT_LE(s.map.maxCoeff(), 1.0);
    prev = s.painted_cells;
  }
  EXPECT_GT(prev, 100);
}

TEST(Labels, AsDetections) {
  const auto& f = fixture();
  DetectOptions o;
  o.max_grasps = 40;
  const auto all = labels_as_detections(f.labels, o);
  ASSERT_FALSE(all.empty());
  EXPECT_LE(all.size(), 40u);
  for (std::size_t i = 1; i < all.size(); ++i) EXPECT_GE(all[i - 1].score, all[i].score);
  const auto two = labels_as_detections(f.labels, o, 2);
  ASSERT_FALSE(two.empty());
  const auto objects = make_eval_objects(f.scene.objects);
  for (const auto& g : two) {
    const auto c = find_contacts(g, objects);
    ASSERT_TRUE(c);
    EXPECT_EQ(c->object_id, 2);
  }
  EXPECT_GE(average_precision(all, objects).ap, 0.9);
  EXPECT_EQ(target_oriented_ap(two, objects, 2).ap, 1.0);
}

TEST(Report, JsonAndCsv) {
  APReport a, b;
  a.grades = b.grades = {0.2, 0.4};
  a.per_grade = {0.5, 1.0};
  a.ap = 0.75;
  b.per_grade = {0.0, 0.5};
  b.ap = 0.25;
  const std::vector<SceneEval> scenes{{"s0", a}, {"s1", b}};
  const auto j = eval_report_json(scenes);
  EXPECT_DOUBLE_EQ(j["ap"].get<double>(), 0.5);
  EXPECT_DOUBLE_EQ(j["per_grade"]["0.2"].get<double>(), 0.25);
  EXPECT_DOUBLE_EQ(j["per_grade"]["0.4"].get<double>(), 0.75);
  ASSERT_EQ(j["per_scene"].size(), 2u);
  EXPECT_EQ(j["per_scene"][1]["scene"], "s1");
  EXPECT_EQ(eval_report_json({})["ap"].get<double>(), 0.0);

  TempDir tmp;
  write_eval_csv(tmp / "r.csv", scenes);
  std::ifstream in(tmp / "r.csv");
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "scene,grade,ap");
  EXPECT_EQ(lines[1], "s0,0.2,0.5");
  EXPECT_EQ(lines[4], "s1,0.4,0.5");
}
