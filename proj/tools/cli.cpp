#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "flexlog/image_io.hpp"
#include "flexlog/pipeline.hpp"
#include "flexlog/service.hpp"

namespace flexlog {
namespace {

namespace fs = std::filesystem;

struct Options {
  int threads = 0;

  fs::path out;
  int count = 10;
  int first = 0;
  std::uint64_t seed = 0;

  fs::path scenes;
  int synthetic = 0;
  DatagenConfig datagen;

  fs::path dataset;
  fs::path history;
  std::string preset = "small";
  int epochs = -1;
  int batch = -1;
  double lr = -1.0;

  fs::path scene;
  fs::path checkpoint;
  std::string mode = "grid";
  DetectOptions detect;
  std::vector<int> pixel;
  std::vector<int> bbox;
  fs::path mask;
  fs::path heatmap;
  fs::path graspness;
  fs::path target;
  fs::path heatmap_out;

  bool oracle = false;
  int target_id = 0;
  int k_max = 50;
  fs::path csv;

  std::vector<int> ks{12, 48, 192};

  std::string serve = "127.0.0.1:8080";
};

void write_text(const fs::path& path, const std::string& text, std::ostream& out) {
  if (path.empty()) {
    out << text << "\n";
    return;
  }
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::Io, "cannot write " + path.string());
  f << text << "\n";
}

std::vector<std::pair<Scene, SceneLabels>> load_scenes(const Options& o) {
  if (o.synthetic > 0) return synthesize_scenes(o.seed, o.synthetic, o.first);
  std::vector<std::pair<Scene, SceneLabels>> out;
  if (o.scenes.empty()) return out;
  if (fs::exists(o.scenes / "depth.png")) {
    out.push_back(read_scene_dir(o.scenes));
    return out;
  }
  if (!fs::is_directory(o.scenes)) throw Error(ErrorCode::Io, "no such directory " + o.scenes.string());
  for (const auto& dir : list_scene_dirs(o.scenes)) out.push_back(read_scene_dir(dir));
  return out;
}

int cmd_synth(const Options& o, std::ostream& out) {
  if (o.out.empty()) throw Error(ErrorCode::InvalidArgument, "--out is required");
  const auto scenes = synthesize_scenes(o.seed, o.count, o.first);
  fs::create_directories(o.out);
  long long labels = 0;
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& [scene, l] : scenes) {
    write_scene_dir(o.out / scene.id, scene, l);
    labels += static_cast<long long>(l.size());
    ids.push_back(scene.id);
  }
  out << nlohmann::json{{"scenes", ids}, {"labels", labels}}.dump() << "\n";
  return 0;
}

int cmd_datagen(Options o, std::ostream& out, std::ostream& err) {
  if (o.out.empty()) throw Error(ErrorCode::InvalidArgument, "--out is required");
  const auto scenes = load_scenes(o);
  if (scenes.empty()) {
    err << "no scenes\n";
    return kExitNoScenes;
  }
  o.datagen.seed = o.seed;
  const Dataset data = generate_dataset(scenes, o.datagen);
  write_dataset(o.out, data.samples);
  out << to_json_stats(data.stats).dump() << "\n";
  return 0;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
  if (o.dataset.empty() || o.out.empty()) throw Error(ErrorCode::InvalidArgument, "--dataset and --out are required");
  ModelConfig config;
  if (o.preset == "small") {
    config = small_model_config();
  } else if (o.preset != "default") {
    throw Error(ErrorCode::InvalidArgument, "--preset must be small or default");
  }
  if (o.epochs >= 0) config.epochs = o.epochs;
  if (o.batch > 0) config.batch_size = o.batch;
  if (o.lr > 0.0) config.learning_rate = o.lr;
  config.validate();

  const auto samples = read_dataset(o.dataset);
  const TrainResult result = train(
      samples, config, o.seed,
      [&](const EpochStats& e) {
        out << "epoch " << e.epoch << " loss " << e.loss.total << " theta_acc " << e.theta_accuracy << " lr "
            << e.learning_rate << std::endl;
      },
      o.threads);
  save_checkpoint(o.out, result.model);
  write_history_csv(o.history.empty() ? fs::path(o.out.string() + ".history.csv") : o.history, result.history);
  if (result.aborted) {
    err << "training aborted: " << result.abort_reason << "\n";
    return kExitError;
  }
  return 0;
}

std::optional<Target> target_from_file(const fs::path& path) {
  if (path.extension() == ".png") return read_mask_png(path);
  const nlohmann::json j = read_json(path);
  if (j.contains("bbox")) {
    const auto b = j.at("bbox").get<std::vector<int>>();
    if (b.size() != 4) throw Error(ErrorCode::InvalidArgument, "bbox needs 4 values");
    return BBox{b[0], b[1], b[2], b[3]};
  }
  if (j.contains("click")) {
    const auto c = j.at("click").get<std::vector<int>>();
    if (c.size() != 2) throw Error(ErrorCode::InvalidArgument, "click needs 2 values");
    return Click{{c[0], c[1]}};
  }
  throw Error(ErrorCode::InvalidArgument, "target file needs a bbox or click entry");
}

GuidanceInput guidance_input(const Options& o, const PointCloud& cloud) {
  GuidanceInput in;
  switch (o.detect.mode) {
    case GuidanceMode::Grid: break;
    case GuidanceMode::Heatmap: {
      if (o.heatmap.empty()) throw Error(ErrorCode::InvalidArgument, "heatmap mode needs --heatmap");
      in.heatmap = read_heatmap_png(o.heatmap);
      break;
    }
    case GuidanceMode::Graspness: {
      if (o.graspness.empty()) throw Error(ErrorCode::InvalidArgument, "graspness mode needs --graspness");
      in.graspness = graspness_from_json(read_json(o.graspness));
      break;
    }
    case GuidanceMode::Click:
      if (o.pixel.size() == 2) in.target = Click{{o.pixel[0], o.pixel[1]}};
      break;
    case GuidanceMode::BBox:
      if (o.bbox.size() == 4) in.target = BBox{o.bbox[0], o.bbox[1], o.bbox[2], o.bbox[3]};
      break;
    case GuidanceMode::Mask:
      if (!o.mask.empty()) in.target = read_mask_png(o.mask);
      break;
  }
  if (!in.target && !o.target.empty()) in.target = target_from_file(o.target);
  if (const auto* click = in.target ? std::get_if<Click>(&*in.target) : nullptr) {
    if (click->pixel.u < 0 || click->pixel.u >= cloud.width || click->pixel.v < 0 || click->pixel.v >= cloud.height) {
      throw Error(ErrorCode::InvalidArgument, "pixel outside the image");
    }
  }
  return in;
}

int cmd_detect(Options o, std::ostream& out, std::ostream& err) {
  if (o.scene.empty() || o.checkpoint.empty()) {
    throw Error(ErrorCode::InvalidArgument, "--scene and --checkpoint are required");
  }
  o.detect.mode = guidance_mode_from_string(o.mode);
  const Model model = load_checkpoint(o.checkpoint);
  const auto [scene, labels] = read_scene_dir(o.scene);
  const PointCloud cloud = depth_to_cloud(scene.depth, scene.intrinsics);

  std::vector<RegionFrame> centers;
  try {
    centers = guidance_centers(cloud, scene.intrinsics, guidance_input(o, cloud), o.detect);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::EmptyTarget) throw;
    err << e.what() << "\n";
    return kExitNoRegions;
  }
  const DetectResult result = detect(model, cloud, centers, o.detect, o.threads);
  if (result.regions.empty()) {
    err << "guidance produced no regions\n";
    return kExitNoRegions;
  }
  nlohmann::json j = detections_to_json(result);
  j["scene_id"] = scene.id;
  j["mode"] = o.mode;
  write_text(o.out, j.dump(2), out);

  if (!o.heatmap_out.empty()) {
    std::vector<std::pair<RegionFrame, double>> painted;
    for (const auto& r : result.regions) painted.emplace_back(r.frame, r.best_score);
    const int half = std::max(1, o.detect.grid_px / 2);
    write_heatmap_png(o.heatmap_out, splice_heatmap(painted, cloud.height, cloud.width, half).map);
  }
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out, std::ostream& err) {
  if (!o.oracle && o.checkpoint.empty()) throw Error(ErrorCode::InvalidArgument, "--checkpoint or --oracle is required");
  const auto scenes = load_scenes(o);
  if (scenes.empty()) {
    err << "no scenes\n";
    return kExitNoScenes;
  }
  std::optional<Model> model;
  if (!o.oracle) model = load_checkpoint(o.checkpoint);

  std::vector<SceneEval> evals;
  for (const auto& [scene, labels] : scenes) {
    if (scene.objects.empty()) {
      err << "skipping " << scene.id << ": no object models\n";
      continue;
    }
    const auto objects = make_eval_objects(scene.objects);
    std::vector<Grasp> dets;
    if (o.oracle) {
      dets = labels_as_detections(labels, o.detect, o.target_id);
    } else {
      const PointCloud cloud = depth_to_cloud(scene.depth, scene.intrinsics);
      std::vector<RegionFrame> centers;
      if (o.target_id > 0) {
        const MaskImage mask = (labels.mask.array() == o.target_id).cast<std::uint8_t>();
        try {
          centers = centers_from_target(mask, cloud, o.detect.k);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::EmptyTarget) throw;
        }
      } else {
        centers = grid_centers(cloud, o.detect.grid_px);
      }
      dets = grasps_of(detect(*model, cloud, centers, o.detect, o.threads).grasps);
    }
    SceneEval e{scene.id, {}};
    e.report = o.target_id > 0 ? target_oriented_ap(dets, objects, o.target_id, std::min(o.k_max, 10))
                               : average_precision(dets, objects, o.k_max);
    evals.push_back(std::move(e));
  }
  nlohmann::json report = eval_report_json(evals);
  report["metric"] = o.target_id > 0 ? "toap" : "ap";
  report["detections"] = o.oracle ? "oracle" : "model";
  write_text(o.out, report.dump(2), out);
  if (!o.csv.empty()) write_eval_csv(o.csv, evals);
  return 0;
}

int cmd_heatmap(const Options& o, std::ostream& out) {
  if (o.scene.empty() || o.checkpoint.empty() || o.out.empty()) {
    throw Error(ErrorCode::InvalidArgument, "--scene, --checkpoint and --out are required");
  }
  const Model model = load_checkpoint(o.checkpoint);
  const auto [scene, labels] = read_scene_dir(o.scene);
  const PointCloud cloud = depth_to_cloud(scene.depth, scene.intrinsics);
  fs::create_directories(o.out);
  nlohmann::json sweep = nlohmann::json::array();
  for (int k : o.ks) {
    const SplicedHeatmap h = scene_heatmap(model, cloud, k, o.detect, o.threads);
    const fs::path file = o.out / ("heatmap_k" + std::to_string(k) + ".png");
    write_heatmap_png(file, h.map);
    sweep.push_back({{"k", k},
                     {"grid_px", grid_px_for_count(cloud.height, cloud.width, k)},
                     {"painted_cells", h.painted_cells},
                     {"file", file.string()}});
  }
  out << sweep.dump() << "\n";
  return 0;
}

int cmd_serve(const Options& o, std::ostream& out) {
  if (o.checkpoint.empty()) throw Error(ErrorCode::InvalidArgument, "--checkpoint is required");
  const fs::path root = o.scenes.empty() ? o.scene : o.scenes;
  if (root.empty()) throw Error(ErrorCode::InvalidArgument, "--scenes is required");
  const auto colon = o.serve.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "--serve expects ADDR:PORT");
  const std::string host = o.serve.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(o.serve.substr(colon + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "bad port in --serve");
  }
  ServiceState state;
  state.model = load_checkpoint(o.checkpoint);
  state.scenes = load_scene_store(root);
  state.defaults = o.detect;
  state.workers = o.threads;
  HttpService service(state);
  const int bound = service.bind(host, port);
  out << "serving " << state.scenes.size() << " scenes on " << host << ":" << bound << std::endl;
  service.listen();
  return 0;
}

void add_detect_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--k", o.detect.k, "Region count for heatmap, graspness, bbox and mask guidance")
      ->check(CLI::Range(1, 4096));
  cmd->add_option("--grid", o.detect.grid_px, "Grid spacing in pixels")->check(CLI::PositiveNumber);
  cmd->add_option("--radius", o.detect.radius, "Region radius in meters")->check(CLI::Range(1e-4, 0.5));
  cmd->add_option("--n-points", o.detect.n_points, "Points per region")->check(CLI::Range(32, 65535));
  cmd->add_option("--top-k", o.detect.top_k_per_region, "Grasps decoded per region")->check(CLI::PositiveNumber);
  cmd->add_option("--max-grasps", o.detect.max_grasps, "Grasps kept after NMS");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"FlexLoG grasp detection toolkit", "flexlog"};
  app.set_config("--config", "", "TOML-style file with option defaults; flags win");
  app.add_option("--threads", o.threads, "Worker threads (0: FLEXLOG_THREADS or all cores)")->check(CLI::NonNegativeNumber);
  app.require_subcommand(1);

  auto* synth = app.add_subcommand("synth", "Write seeded synthetic scenes");
  synth->add_option("--out", o.out, "Output directory")->required();
  synth->add_option("--count", o.count, "Number of scenes")->check(CLI::NonNegativeNumber);
  synth->add_option("--first", o.first, "Index of the first scene in the series")->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", o.seed, "Series seed");

  auto* datagen = app.add_subcommand("datagen", "Build a regional dataset");
  datagen->add_option("--scenes", o.scenes, "Scene directory or parent of scene directories");
  datagen->add_option("--synthetic", o.synthetic, "Synthesize this many scenes instead")->check(CLI::NonNegativeNumber);
  datagen->add_option("--first", o.first, "Index of the first synthetic scene");
  datagen->add_option("--seed", o.seed, "Scene series and center sampling seed");
  datagen->add_option("--out", o.out, "Dataset file")->required();
  datagen->add_option("--cell", o.datagen.cell_px, "Center sampling cell size in pixels");
  datagen->add_option("--sigma-k", o.datagen.sigma_k, "Label kernel sigma in pixels");
  datagen->add_option("--sigma-blur", o.datagen.sigma_blur, "Blur sigma in pixels");
  datagen->add_option("--threshold", o.datagen.threshold, "Heatmap threshold for label centers");
  datagen->add_option("--noise", o.datagen.noise_frac, "Probability of a random center per cell");
  datagen->add_option("--radius", o.datagen.region_radius, "Region radius in meters");
  datagen->add_option("--n-points", o.datagen.n_points, "Points per region");

  auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset");
  train_cmd->add_option("--dataset", o.dataset, "Dataset file")->required();
  train_cmd->add_option("--out", o.out, "Checkpoint file")->required();
  train_cmd->add_option("--history", o.history, "History CSV (default: checkpoint path + .history.csv)");
  train_cmd->add_option("--preset", o.preset, "small or default")->check(CLI::IsMember({"small", "default"}));
  train_cmd->add_option("--epochs", o.epochs, "Epoch count");
  train_cmd->add_option("--batch", o.batch, "Batch size");
  train_cmd->add_option("--lr", o.lr, "Learning rate");
  train_cmd->add_option("--seed", o.seed, "Initialization and shuffle seed");

  auto* detect_cmd = app.add_subcommand("detect", "Detect grasps in one scene");
  detect_cmd->add_option("--scene", o.scene, "Scene directory")->required();
  detect_cmd->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  detect_cmd->add_option("--mode", o.mode, "Guidance mode")
      ->check(CLI::IsMember({"grid", "heatmap", "graspness", "bbox", "mask", "click"}));
  add_detect_options(detect_cmd, o);
  detect_cmd->add_option("--pixel", o.pixel, "Click pixel u,v")->expected(2)->delimiter(',');
  detect_cmd->add_option("--bbox", o.bbox, "Box u0,v0,u1,v1 (exclusive max)")->expected(4)->delimiter(',');
  detect_cmd->add_option("--mask", o.mask, "Target mask PNG");
  detect_cmd->add_option("--heatmap", o.heatmap, "Guidance heatmap PNG");
  detect_cmd->add_option("--graspness", o.graspness, "Scored points JSON");
  detect_cmd->add_option("--target", o.target, "Target JSON ({\"bbox\":[...]} or {\"click\":[u,v]}) or mask PNG");
  detect_cmd->add_option("--out", o.out, "Grasp JSON (default: stdout)");
  detect_cmd->add_option("--heatmap-out", o.heatmap_out, "Spliced region heatmap PNG");
  detect_cmd->add_option("--seed", o.seed, "Unused; accepted for uniform job files");

  auto* eval_cmd = app.add_subcommand("eval", "AP or target-oriented AP over scenes");
  eval_cmd->add_option("--scenes", o.scenes, "Scene directory or parent of scene directories");
  eval_cmd->add_option("--synthetic", o.synthetic, "Evaluate synthetic scenes instead");
  eval_cmd->add_option("--first", o.first, "Index of the first synthetic scene");
  eval_cmd->add_option("--seed", o.seed, "Synthetic series seed");
  eval_cmd->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  eval_cmd->add_flag("--oracle", o.oracle, "Use ground-truth labels as detections");
  eval_cmd->add_option("--target-id", o.target_id, "Object id for target-oriented AP");
  eval_cmd->add_option("--k-max", o.k_max, "Ranks evaluated")->check(CLI::PositiveNumber);
  add_detect_options(eval_cmd, o);
  eval_cmd->add_option("--out", o.out, "Report JSON (default: stdout)");
  eval_cmd->add_option("--csv", o.csv, "Per-scene CSV");

  auto* heatmap_cmd = app.add_subcommand("heatmap", "Spliced heatmaps for a sweep of K");
  heatmap_cmd->add_option("--scene", o.scene, "Scene directory")->required();
  heatmap_cmd->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  heatmap_cmd->add_option("--ks", o.ks, "Region counts")->delimiter(',');
  add_detect_options(heatmap_cmd, o);
  heatmap_cmd->add_option("--out", o.out, "Output directory")->required();

  auto* serve_cmd = app.add_subcommand("serve", "HTTP API for click-and-grasp");
  serve_cmd->add_option("--scenes,--scene", o.scenes, "Scene directory or parent of scene directories");
  serve_cmd->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  serve_cmd->add_option("--serve", o.serve, "ADDR:PORT");
  add_detect_options(serve_cmd, o);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*synth) return cmd_synth(o, out);
    if (*datagen) return cmd_datagen(o, out, err);
    if (*train_cmd) return cmd_train(o, out, err);
    if (*detect_cmd) return cmd_detect(o, out, err);
    if (*eval_cmd) return cmd_eval(o, out, err);
    if (*heatmap_cmd) return cmd_heatmap(o, out);
    if (*serve_cmd) return cmd_serve(o, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace flexlog
