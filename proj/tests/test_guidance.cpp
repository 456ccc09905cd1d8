#include <functional>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "flexlog/guidance.hpp"
#include "oracles.hpp"

using namespace flexlog;

namespace {

Intrinsics intr48() { return Intrinsics{60.0, 60.0, 24.0, 24.0, 48, 48, 0.001}; }

PointCloud plane_cloud(const Intrinsics& intr, std::uint16_t depth = 500) {
  return depth_to_cloud(DepthImage::Constant(intr.height, intr.width, depth), intr);
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::Io;
}

}  // namespace

TEST(GridCenters, OnePerCell) {
  const PointCloud c = plane_cloud(intr48());
  const auto centers = grid_centers(c, 12);
  ASSERT_EQ(centers.size(), 16u);
  EXPECT_EQ(centers[0].source_pixel->u, 6);
  EXPECT_EQ(centers[0].source_pixel->v, 6);
  EXPECT_EQ(centers[5].source_pixel->u, 18);
  EXPECT_EQ(centers[5].source_pixel->v, 18);
  for (const auto& f : centers) EXPECT_GT(f.center.z(), 0.0);
}

TEST(GridCenters, WholeImageCell) { EXPECT_EQ(grid_centers(plane_cloud(intr48()), 48).size(), 1u); }

TEST(GridCenters, FallsBackToNearestValidPixel) {
  DepthImage d = DepthImage::Constant(48, 48, 500);
  d(6, 6) = 0;
  d(6, 7) = 0;
  d(5, 6) = 0;
  d(7, 6) = 0;
  d(6, 5) = 0;
  d.block(12, 0, 12, 12).setZero();  // second row, first cell empty
  const PointCloud c = depth_to_cloud(d, intr48());
  const auto centers = grid_centers(c, 12);
  EXPECT_EQ(centers.size(), 15u);
  const Pixel p = *centers[0].source_pixel;
  EXPECT_EQ((p.u - 6) * (p.u - 6) + (p.v - 6) * (p.v - 6), 2);
  EXPECT_EQ(p, (Pixel{5, 5}));
}

TEST(GridCenters, CountBoundAndMonotone) {
  std::mt19937_64 rng(1);
  std::bernoulli_distribution hole(0.6);
  DepthImage d(48, 48);
  for (int v = 0; v < 48; ++v)
    for (int u = 0; u < 48; ++u) d(v, u) = hole(rng) ? 0 : 500;
  const PointCloud c = depth_to_cloud(d, intr48());
  for (int g = 1; g <= 48; ++g) {
    const std::size_t cells = static_cast<std::size_t>(((48 + g - 1) / g) * ((48 + g - 1) / g));
    EXPECT_LE(grid_centers(c, g).size(), cells);
  }
  for (const auto& chain : {std::vector<int>{48, 24, 12, 6, 3}, std::vector<int>{48, 16, 8, 4, 2, 1}}) {
    std::size_t prev = 0;
    for (int g : chain) {
      const auto n = grid_centers(c, g).size();
      EXPECT_GE(n, prev) << "grid " << g;
      prev = n;
    }
  }
}

TEST(HeatmapCenters, OneHot) {
  const PointCloud c = plane_cloud(intr48());
  Heatmap h = Heatmap::Zero(48, 48);
  h(10, 30) = 1.0;
  const auto centers = centers_from_heatmap(h, c, 1);
  ASSERT_EQ(centers.size(), 1u);
  EXPECT_EQ(centers[0].center, c.points.col(c.index_at(30, 10)));
}

TEST(HeatmapCenters, TiesResolveRowMajor) {
  const PointCloud c = plane_cloud(intr48());
  Heatmap h = Heatmap::Zero(48, 48);
  h(20, 5) = 0.8;
  h(10, 40) = 0.8;
  const auto centers = centers_from_heatmap(h, c, 1);
  ASSERT_EQ(centers.size(), 1u);
  EXPECT_EQ(*centers[0].source_pixel, (Pixel{40, 10}));
}

TEST(HeatmapCenters, LocalMaxSuppression) {
  const PointCloud c = plane_cloud(intr48());
  Heatmap h = Heatmap::Zero(48, 48);
  h(10, 10) = 1.0;
  h(10, 11) = 0.9;
  h(30, 30) = 0.5;
  const auto centers = centers_from_heatmap(h, c, 2);
  ASSERT_EQ(centers.size(), 2u);
  EXPECT_EQ(*centers[1].source_pixel, (Pixel{30, 30}));
}

TEST(HeatmapCenters, MonotoneInK) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Heatmap h(48, 48);
  for (int v = 0; v < 48; ++v)
    for (int x = 0; x < 48; ++x) h(v, x) = u(rng);
  const PointCloud c = plane_cloud(intr48());
  auto pixels = [&](int k) {
    std::set<std::pair<int, int>> s;
    for (const auto& f : centers_from_heatmap(h, c, k)) s.emplace(f.source_pixel->u, f.source_pixel->v);
    return s;
  };
  for (int k = 1; k < 60; ++k) {
    const auto a = pixels(k), b = pixels(k + 1);
    EXPECT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
  }
}

TEST(HeatmapCenters, Errors) {
  const PointCloud c = plane_cloud(intr48());
  EXPECT_EQ(code_of([&] { centers_from_heatmap(Heatmap::Zero(47, 48), c, 3); }), ErrorCode::HeatmapDimMismatch);
  EXPECT_EQ(code_of([&] { centers_from_heatmap(Heatmap::Constant(48, 48, 1.5), c, 3); }),
            ErrorCode::InvalidArgument);
}

TEST(TargetCenters, ClickIsBackProjectedPixel) {
  const PointCloud c = plane_cloud(intr48());
  const auto centers = centers_from_target(Click{{7, 9}}, c, 48);
  ASSERT_EQ(centers.size(), 1u);
  EXPECT_EQ(centers[0].center, back_project(intr48(), 7, 9, 0.5));
  EXPECT_EQ(*centers[0].source_pixel, (Pixel{7, 9}));
}

TEST(TargetCenters, ClickOnZeroDepth) {
  DepthImage d = DepthImage::Constant(48, 48, 500);
  d(9, 7) = 0;
  const PointCloud c = depth_to_cloud(d, intr48());
  EXPECT_EQ(code_of([&] { centers_from_target(Click{{7, 9}}, c, 48); }), ErrorCode::EmptyTarget);
}

TEST(TargetCenters, MaskMatchesFpsOracle) {
  const PointCloud c = plane_cloud(intr48());
  MaskImage m = MaskImage::Zero(48, 48);
  m.block(10, 20, 8, 12).setOnes();
  const auto centers = centers_from_target(m, c, 4);
  ASSERT_EQ(centers.size(), 4u);

  Indices members;
  for (int v = 0; v < 48; ++v)
    for (int u = 0; u < 48; ++u)
      if (m(v, u)) members.push_back(c.index_at(u, v));
  const Points3 pts = gather(c.points, members);
  const Vec3 centroid = pts.rowwise().mean();
  const Indices expect = oracle::fps(pts, 4, nearest_point(pts, centroid));
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(centers[i].center, pts.col(expect[i]));
    const Pixel p = *centers[i].source_pixel;
    EXPECT_TRUE(m(p.v, p.u));
  }
}

TEST(TargetCenters, BBoxAndEmptyTargets) {
  DepthImage d = DepthImage::Constant(48, 48, 500);
  d.block(0, 0, 10, 10).setZero();
  const PointCloud c = depth_to_cloud(d, intr48());
  const auto centers = centers_from_target(BBox{20, 20, 30, 26}, c, 5);
  EXPECT_EQ(centers.size(), 5u);
  for (const auto& f : centers) {
    EXPECT_GE(f.source_pixel->u, 20);
    EXPECT_LT(f.source_pixel->u, 30);
    EXPECT_GE(f.source_pixel->v, 20);
    EXPECT_LT(f.source_pixel->v, 26);
  }
  EXPECT_EQ(code_of([&] { centers_from_target(BBox{0, 0, 10, 10}, c, 5); }), ErrorCode::EmptyTarget);
  EXPECT_EQ(code_of([&] { centers_from_target(MaskImage(MaskImage::Zero(48, 48)), c, 5); }), ErrorCode::EmptyTarget);
  EXPECT_EQ(code_of([&] { centers_from_target(BBox{0, 0, 49, 10}, c, 5); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(centers_from_target(BBox{20, 20, 22, 21}, c, 48).size(), 2u);
}

TEST(GraspnessCenters, TopKSkippingBehindCamera) {
  const Intrinsics intr = intr48();
  std::vector<ScoredPoint> pts{{Vec3(0, 0, 0.5), 0.2}, {Vec3(0.01, 0, -0.5), 0.9}, {Vec3(0.02, 0, 0.5), 0.7},
                               {Vec3(5, 0, 0.5), 0.7}};
  const auto centers = centers_from_graspness(pts, intr, 2);
  ASSERT_EQ(centers.size(), 2u);
  EXPECT_EQ(centers[0].center, pts[2].p);
  EXPECT_TRUE(centers[0].source_pixel);
  EXPECT_EQ(centers[1].center, pts[3].p);
  EXPECT_FALSE(centers[1].source_pixel);
}

TEST(GraspnessCenters, JsonFormat) {
  const auto j = nlohmann::json::parse(R"([{"p":[0.1,0.2,0.5],"score":0.4}])");
  const auto pts = graspness_from_json(j);
  ASSERT_EQ(pts.size(), 1u);
  EXPECT_EQ(pts[0].p, Vec3(0.1, 0.2, 0.5));
  EXPECT_EQ(pts[0].score, 0.4);
}

TEST(BuildRegions, FullRegionHasExactlyN) {
  const Intrinsics intr{300.0, 300.0, 24.0, 24.0, 48, 48, 0.001};
  const PointCloud c = plane_cloud(intr);
  const auto centers = grid_centers(c, 24);
  const RegionSet set = build_regions(c, centers, 0.06, 64);
  ASSERT_EQ(set.regions.size(), centers.size());
  for (const auto& r : set.regions) {
    EXPECT_EQ(r.points.cols(), 64);
    EXPECT_LE(r.points.colwise().norm().maxCoeff(), 0.06 + 1e-12);
    EXPECT_GT(r.frame.center.z(), 0.0);
  }
}

TEST(BuildRegions, IsolatedCenterDropped) {
  const PointCloud c = plane_cloud(intr48());
  std::vector<RegionFrame> centers{{Vec3(0, 0, 3.0), std::nullopt}, {c.points.col(100), std::nullopt}};
  const RegionSet set = build_regions(c, centers, 0.08, 512);
  ASSERT_EQ(set.regions.size(), 1u);
  EXPECT_EQ(set.regions[0].center_index, 1);
  EXPECT_EQ(set.dropped, (std::vector<int>{0}));
}

TEST(BuildRegions, MatchesCropAndFpsOracle) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> depth(450, 550);
  DepthImage d(48, 48);
  for (int v = 0; v < 48; ++v)
    for (int u = 0; u < 48; ++u) d(v, u) = static_cast<std::uint16_t>(depth(rng));
  const PointCloud c = depth_to_cloud(d, intr48());
  const auto centers = grid_centers(c, 16);
  const RegionSet set = build_regions(c, centers, 0.07, 128);
  for (const auto& r : set.regions) {
    const Indices idx = oracle::ball(c.points, r.frame.center, 0.07, 128);
    const Points3 expect = gather(c.points, idx).colwise() - r.frame.center;
    EXPECT_EQ(r.points, expect);
  }
}
