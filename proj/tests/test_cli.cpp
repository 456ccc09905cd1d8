#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "cli.hpp"
#include "flexlog/datagen.hpp"
#include "flexlog/image_io.hpp"
#include "flexlog/train.hpp"
#include "test_util.hpp"

using namespace flexlog;
using flexlog::testing::TempDir;

namespace {

struct Outcome {
  int code = 0;
  std::string out;
  std::string err;
};

Outcome run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Outcome r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    tmp_ = new TempDir();
    const Outcome s = run({"synth", "--out", (*tmp_ / "scenes").string(), "--count", "3", "--seed", "4"});
    ASSERT_EQ(s.code, 0) << s.err;
    const Outcome d = run({"datagen", "--scenes", (*tmp_ / "scenes").string(), "--out", (*tmp_ / "d.flxg").string(),
                       "--cell", "16", "--seed", "2"});
    ASSERT_EQ(d.code, 0) << d.err;
    const Outcome t = run({"train", "--dataset", (*tmp_ / "d.flxg").string(), "--out", (*tmp_ / "m.flxp").string(),
                       "--preset", "small", "--epochs", "1", "--seed", "3"});
    ASSERT_EQ(t.code, 0) << t.err;
    scene_ = (*tmp_ / "scenes" / nlohmann::json::parse(s.out)["scenes"][0].get<std::string>()).string();
  }
  static void TearDownTestSuite() {
    delete tmp_;
    tmp_ = nullptr;
  }

  static std::filesystem::path path(const std::string& name) { return *tmp_ / name; }

  static TempDir* tmp_;
  static std::string scene_;
};

TempDir* Cli::tmp_ = nullptr;
std::string Cli::scene_;

}  // namespace

TEST_F(Cli, SynthWritesSceneDirectories) {
  const auto dirs = list_scene_dirs(path("scenes"));
  ASSERT_EQ(dirs.size(), 3u);
  for (const auto& d : dirs) {
    EXPECT_TRUE(std::filesystem::exists(d / "depth.png"));
    EXPECT_TRUE(std::filesystem::exists(d / "labels.json"));
    EXPECT_TRUE(std::filesystem::exists(d / "objects.json"));
  }
}

TEST_F(Cli, DatagenStatsAndDeterminism) {
  const Outcome a = run({"datagen", "--scenes", path("scenes").string(), "--out", path("again.flxg").string(), "--cell",
                     "16", "--seed", "2"});
  ASSERT_EQ(a.code, 0) << a.err;
  const auto stats = nlohmann::json::parse(a.out);
  for (const char* key : {"regions", "labeled_regions", "labels", "invalid_fraction"}) EXPECT_TRUE(stats.contains(key));
  EXPECT_GT(stats["labeled_regions"].get<int>(), 0);
  EXPECT_EQ(slurp(path("again.flxg")), slurp(path("d.flxg")));
  EXPECT_EQ(static_cast<int>(read_dataset(path("d.flxg")).size()), stats["regions"].get<int>());
}

TEST_F(Cli, DatagenWithoutScenes) {
  std::filesystem::create_directories(path("empty"));
  const Outcome r = run({"datagen", "--scenes", path("empty").string(), "--out", path("x.flxg").string()});
  EXPECT_EQ(r.code, kExitNoScenes);
  EXPECT_NE(r.err.find("no scenes"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(path("x.flxg")));
}

TEST_F(Cli, TrainWritesCheckpointAndHistory) {
  const Model m = load_checkpoint(path("m.flxp"));
  EXPECT_EQ(m.config.embed_dim, small_model_config().embed_dim);
  const std::string history = slurp(path("m.flxp.history.csv"));
  EXPECT_EQ(history.substr(0, 6), "epoch,");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 2);
}

TEST_F(Cli, DetectGrid) {
  const Outcome r = run({"detect", "--scene", scene_, "--checkpoint", path("m.flxp").string(), "--mode", "grid", "--grid",
                     "32", "--heatmap-out", path("h.png").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["mode"], "grid");
  EXPECT_GE(j["grasps"].size(), 1u);
  for (const auto& g : j["grasps"]) {
    for (const char* key : {"t", "euler", "width", "score"}) EXPECT_TRUE(g.contains(key)) << key;
  }
  EXPECT_EQ(read_heatmap_png(path("h.png")).cols(), 256);
}

TEST_F(Cli, DetectClickLocality) {
  const auto [scene, labels] = read_scene_dir(scene_);
  int u = -1, v = -1;
  for (int y = 0; y < labels.mask.rows() && u < 0; ++y)
    for (int x = 0; x < labels.mask.cols(); ++x)
      if (labels.mask(y, x) != 0) {
        u = x;
        v = y;
        break;
      }
  ASSERT_GE(u, 0);
  const Outcome r = run({"detect", "--scene", scene_, "--checkpoint", path("m.flxp").string(), "--mode", "click",
                     "--pixel", std::to_string(u) + "," + std::to_string(v), "--out", path("click.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(slurp(path("click.json")));
  const Vec3 clicked = back_project(scene.intrinsics, u, v, scene.depth(v, u) * scene.intrinsics.depth_scale);
  ASSERT_FALSE(j["grasps"].empty());
  for (const auto& g : j["grasps"]) {
    const Vec3 t(g["t"][0].get<double>(), g["t"][1].get<double>(), g["t"][2].get<double>());
    EXPECT_LE((t - clicked).norm(), kDefaultRegionRadius + 0.02);
  }
}

TEST_F(Cli, DetectClickOnZeroDepthExits3) {
  auto [scene, labels] = read_scene_dir(scene_);
  scene.depth(10, 20) = 0;
  write_scene_dir(path("holey"), scene, labels);
  const Outcome r = run({"detect", "--scene", path("holey").string(), "--checkpoint", path("m.flxp").string(), "--mode",
                     "click", "--pixel", "20,10"});
  EXPECT_EQ(r.code, kExitNoRegions);
  const Outcome outside = run({"detect", "--scene", scene_, "--checkpoint", path("m.flxp").string(), "--mode", "click",
                           "--pixel", "900,10"});
  EXPECT_EQ(outside.code, kExitError);
}

TEST_F(Cli, EvalOracleAndModel) {
  const Outcome oracle = run({"eval", "--scenes", path("scenes").string(), "--oracle", "--csv", path("e.csv").string()});
  ASSERT_EQ(oracle.code, 0) << oracle.err;
  const auto j = nlohmann::json::parse(oracle.out);
  EXPECT_EQ(j["metric"], "ap");
  EXPECT_EQ(j["detections"], "oracle");
  EXPECT_GE(j["ap"].get<double>(), 0.9);
  EXPECT_EQ(j["per_scene"].size(), 3u);
  const std::string csv = slurp(path("e.csv"));
  EXPECT_EQ(csv.substr(0, 14), "scene,grade,ap");
  EXPECT_GT(std::count(csv.begin(), csv.end(), '\n'), 3);

  const Outcome model = run({"eval", "--scenes", path("scenes").string(), "--checkpoint", path("m.flxp").string(),
                         "--grid", "32", "--target-id", "1"});
  ASSERT_EQ(model.code, 0) << model.err;
  const auto m = nlohmann::json::parse(model.out);
  EXPECT_EQ(m["metric"], "toap");
  EXPECT_GE(m["ap"].get<double>(), 0.0);
  EXPECT_LE(m["ap"].get<double>(), 1.0);

  std::filesystem::create_directories(path("none"));
  EXPECT_EQ(run({"eval", "--scenes", path("none").string(), "--oracle"}).code, kExitNoScenes);
}

TEST_F(Cli, HeatmapSweep) {
  const Outcome r = run({"heatmap", "--scene", scene_, "--checkpoint", path("m.flxp").string(), "--ks", "12,48,192",
                     "--out", path("sweep").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  ASSERT_EQ(j.size(), 3u);
  int prev = 0;
  for (const auto& e : j) {
    EXPECT_TRUE(std::filesystem::exists(e["file"].get<std::string>()));
    EXPECT_GE(e["painted_cells"].get<int>(), prev);
    prev = e["painted_cells"].get<int>();
  }
}

TEST_F(Cli, UsageErrors) {
  EXPECT_NE(run({}).code, 0);
  EXPECT_NE(run({"bogus"}).code, 0);
  EXPECT_NE(run({"detect", "--scene", scene_}).code, 0);
  const Outcome missing = run({"train", "--dataset", path("missing.flxg").string(), "--out", path("z.flxp").string()});
  EXPECT_EQ(missing.code, kExitError);
  EXPECT_NE(missing.err.find("error:"), std::string::npos);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(Cli, ConfigFile) {
  std::ofstream(path("job.toml")) << "[synth]\ncount = 1\nseed = 9\n";
  const Outcome r = run({"--config", path("job.toml").string(), "synth", "--out", path("cfg_scenes").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(list_scene_dirs(path("cfg_scenes")).size(), 1u);
}
