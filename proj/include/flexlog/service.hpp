#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "flexlog/pipeline.hpp"
#include "flexlog/scene.hpp"

namespace flexlog {

struct SceneEntry {
  Scene scene;
  SceneLabels labels;
  PointCloud cloud;
};

/// Read-only state shared by every request.
struct ServiceState {
  Model model;
  std::map<std::string, SceneEntry> scenes;
  DetectOptions defaults;
  int workers = 0;
};

/// Loads `root` itself when it is a scene directory, else every scene
/// directory below it.
std::map<std::string, SceneEntry> load_scene_store(const std::filesystem::path& root);

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
  std::map<std::string, std::string> headers;
};

/// Routing without a socket:
///   GET  /api/scenes               -> JSON id list
///   GET  /api/scene/{id}           -> u32 count + f32 xyz (little-endian), metadata in X-Scene-Meta
///   GET  /api/scene/{id}/meta      -> JSON metadata
///   GET  /api/scene/{id}/image     -> 8-bit PNG of the depth image
///   POST /api/grasp                -> grasp JSON; 400 bad payload, 404 unknown scene, 422 no regions
ApiResponse handle_request(const ServiceState& state, const std::string& method, const std::string& path,
                           const std::string& body);

/// HTTP front end over handle_request. `state` must outlive the service.
class HttpService {
 public:
  explicit HttpService(const ServiceState& state);
  ~HttpService();
  HttpService(const HttpService&) = delete;
  HttpService& operator=(const HttpService&) = delete;

  /// Binds host:port (port 0 picks a free one) and returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called from another thread.
  void listen();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocks serving `state` on host:port until the process is stopped.
void run_service(const ServiceState& state, const std::string& host, int port);

}  // namespace flexlog
