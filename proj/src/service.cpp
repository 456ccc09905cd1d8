#include "flexlog/service.hpp"

#include <algorithm>

#include "byte_io.hpp"
#include "flexlog/image_io.hpp"
#include "httplib.h"

namespace flexlog {
namespace {

ApiResponse json_response(int status, const nlohmann::json& j) {
  ApiResponse r;
  r.status = status;
  r.body = j.dump();
  return r;
}

ApiResponse error_response(int status, const std::string& message) {
  return json_response(status, {{"error", message}});
}

nlohmann::json scene_meta(const SceneEntry& e) {
  return {{"id", e.scene.id},
          {"width", e.scene.intrinsics.width},
          {"height", e.scene.intrinsics.height},
          {"intrinsics", e.scene.intrinsics},
          {"points", e.cloud.size()},
          {"objects", e.scene.objects.size()}};
}

std::string point_payload(const PointCloud& cloud) {
  std::string out;
  out.reserve(4 + 12 * static_cast<std::size_t>(cloud.size()));
  bytes::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(cloud.size()));
  for (int i = 0; i < cloud.size(); ++i) {
    for (int d = 0; d < 3; ++d) bytes::put_f32(out, static_cast<float>(cloud.points(d, i)));
  }
  return out;
}

MaskImage depth_preview(const DepthImage& depth) {
  MaskImage img = MaskImage::Zero(depth.rows(), depth.cols());
  std::uint16_t lo = 0xffff, hi = 0;
  for (Eigen::Index i = 0; i < depth.size(); ++i) {
    const std::uint16_t d = depth.data()[i];
    if (d == 0) continue;
    lo = std::min(lo, d);
    hi = std::max(hi, d);
  }
  for (Eigen::Index i = 0; i < depth.size(); ++i) {
    const std::uint16_t d = depth.data()[i];
    if (d == 0) continue;
    const double t = hi > lo ? static_cast<double>(hi - d) / (hi - lo) : 1.0;
    img.data()[i] = static_cast<std::uint8_t>(std::lround(55.0 + 200.0 * t));
  }
  return img;
}

int int_field(const nlohmann::json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer()) throw Error(ErrorCode::InvalidArgument, std::string(key) + " must be an integer");
  return j.at(key).get<int>();
}

std::vector<int> int_array(const nlohmann::json& j, const char* key, std::size_t n) {
  if (!j.contains(key)) throw Error(ErrorCode::InvalidArgument, std::string("missing ") + key);
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != n) {
    throw Error(ErrorCode::InvalidArgument, std::string(key) + " must hold " + std::to_string(n) + " integers");
  }
  std::vector<int> out;
  for (const auto& v : a) {
    if (!v.is_number_integer()) throw Error(ErrorCode::InvalidArgument, std::string(key) + " must hold integers");
    out.push_back(v.get<int>());
  }
  return out;
}

ApiResponse handle_grasp(const ServiceState& state, const std::string& body) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception&) {
    return error_response(400, "body is not valid JSON");
  }
  if (!req.is_object() || !req.contains("scene_id") || !req.at("scene_id").is_string()) {
    return error_response(400, "scene_id (string) is required");
  }
  const std::string id = req.at("scene_id").get<std::string>();
  const auto it = state.scenes.find(id);
  if (it == state.scenes.end()) return error_response(404, "unknown scene '" + id + "'");
  const SceneEntry& entry = it->second;

  DetectOptions options = state.defaults;
  GuidanceInput input;
  try {
    const std::string mode = req.value("mode", std::string("click"));
    options.mode = guidance_mode_from_string(mode);
    options.k = int_field(req, "k", options.k);
    if (options.k < 1 || options.k > 4096) return error_response(400, "k must be in [1, 4096]");
    if (req.contains("radius")) {
      if (!req.at("radius").is_number()) return error_response(400, "radius must be a number");
      options.radius = req.at("radius").get<double>();
      if (!(options.radius > 0.0 && options.radius <= 0.5)) return error_response(400, "radius must be in (0, 0.5]");
    }
    const int w = entry.cloud.width, h = entry.cloud.height;
    switch (options.mode) {
      case GuidanceMode::Click: {
        const auto px = int_array(req, "pixel", 2);
        if (px[0] < 0 || px[0] >= w || px[1] < 0 || px[1] >= h) return error_response(400, "pixel outside the image");
        input.target = Click{{px[0], px[1]}};
        break;
      }
      case GuidanceMode::BBox: {
        const auto b = int_array(req, "bbox", 4);
        if (b[0] < 0 || b[1] < 0 || b[2] > w || b[3] > h || b[0] >= b[2] || b[1] >= b[3]) {
          return error_response(400, "bbox must satisfy 0 <= u0 < u1 <= width and 0 <= v0 < v1 <= height");
        }
        input.target = BBox{b[0], b[1], b[2], b[3]};
        break;
      }
      case GuidanceMode::Grid: break;
      default: return error_response(400, "mode must be click, bbox or grid");
    }
  } catch (const Error& e) {
    return error_response(400, e.what());
  }

  std::vector<RegionFrame> centers;
  try {
    centers = guidance_centers(entry.cloud, entry.scene.intrinsics, input, options);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptyTarget) return error_response(422, e.what());
    return error_response(400, e.what());
  }
  const DetectResult result = detect(state.model, entry.cloud, centers, options, state.workers);
  if (result.regions.empty()) return error_response(422, "guidance produced no regions");
  nlohmann::json out = detections_to_json(result);
  out["scene_id"] = id;
  out["mode"] = to_string(options.mode);
  return json_response(200, out);
}

}  // namespace

std::map<std::string, SceneEntry> load_scene_store(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> dirs;
  if (std::filesystem::exists(root / "depth.png")) {
    dirs.push_back(root);
  } else {
    dirs = list_scene_dirs(root);
  }
  std::map<std::string, SceneEntry> store;
  for (const auto& dir : dirs) {
    SceneEntry e;
    std::tie(e.scene, e.labels) = read_scene_dir(dir);
    e.cloud = depth_to_cloud(e.scene.depth, e.scene.intrinsics);
    const std::string id = e.scene.id;
    store.emplace(id, std::move(e));
  }
  return store;
}

ApiResponse handle_request(const ServiceState& state, const std::string& method, const std::string& path,
                           const std::string& body) {
  try {
    if (method == "GET" && path == "/api/scenes") {
      nlohmann::json ids = nlohmann::json::array();
      for (const auto& [id, entry] : state.scenes) ids.push_back(id);
      return json_response(200, ids);
    }
    const std::string prefix = "/api/scene/";
    if (method == "GET" && path.starts_with(prefix)) {
      std::string rest = path.substr(prefix.size());
      std::string view;
      if (const auto slash = rest.find('/'); slash != std::string::npos) {
        view = rest.substr(slash + 1);
        rest = rest.substr(0, slash);
      }
      const auto it = state.scenes.find(rest);
      if (it == state.scenes.end()) return error_response(404, "unknown scene '" + rest + "'");
      if (view.empty()) {
        ApiResponse r;
        r.content_type = "application/octet-stream";
        r.body = point_payload(it->second.cloud);
        r.headers["X-Scene-Meta"] = scene_meta(it->second).dump();
        return r;
      }
      if (view == "meta") return json_response(200, scene_meta(it->second));
      if (view == "image") {
        ApiResponse r;
        r.content_type = "image/png";
        r.body = encode_png_gray8(depth_preview(it->second.scene.depth));
        return r;
      }
      return error_response(404, "no such resource");
    }
    if (path == "/api/grasp") {
      if (method != "POST") return error_response(405, "use POST");
      return handle_grasp(state, body);
    }
    return error_response(404, "no such resource");
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

struct HttpService::Impl {
  httplib::Server server;
};

HttpService::HttpService(const ServiceState& state) : impl_(std::make_unique<Impl>()) {
  auto dispatch = [&state](const httplib::Request& req, httplib::Response& res) {
    const ApiResponse r = handle_request(state, req.method, req.path, req.body);
    res.status = r.status;
    for (const auto& [k, v] : r.headers) res.set_header(k, v);
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Expose-Headers", "X-Scene-Meta");
    res.set_content(r.body, r.content_type);
  };
  impl_->server.Get(R"(/api/.*)", dispatch);
  impl_->server.Post(R"(/api/.*)", dispatch);
  impl_->server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });
}

HttpService::~HttpService() = default;

int HttpService::bind(const std::string& host, int port) {
  const int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void HttpService::listen() { impl_->server.listen_after_bind(); }

void HttpService::stop() { impl_->server.stop(); }

void run_service(const ServiceState& state, const std::string& host, int port) {
  HttpService service(state);
  service.bind(host, port);
  service.listen();
}

}  // namespace flexlog
