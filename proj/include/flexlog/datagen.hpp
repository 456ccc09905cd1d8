#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "flexlog/guidance.hpp"
#include "flexlog/scene.hpp"

namespace flexlog {

inline constexpr double kLabelRadius = 0.02;

/// Stored label: offset from the region center plus orientation, width and
/// score, kept in single precision as in the dataset file.
struct RegionLabel {
  Eigen::Vector3f dt = Eigen::Vector3f::Zero();
  float theta = 0.0f;
  float gamma = 0.0f;
  float beta = 0.0f;
  float width = 0.0f;
  float score = 0.0f;

  RegionalGrasp regional() const;
  friend bool operator==(const RegionLabel&, const RegionLabel&) = default;
};

struct RegionSample {
  RegionFrame frame;        // source_pixel is not persisted
  Eigen::Matrix3Xf points;  // region frame
  std::vector<RegionLabel> labels;
};

/// Bitwise equality of everything that is written to disk.
bool same_record(const RegionSample& a, const RegionSample& b);

struct DatagenConfig {
  double sigma_k = 3.0;     // px
  double sigma_blur = 2.0;  // px
  double threshold = 0.2;
  double noise_frac = 0.1;
  int cell_px = 8;
  double region_radius = kDefaultRegionRadius;
  int n_points = kDefaultRegionPoints;
  int k_min = kMinRegionPoints;
  double min_label_score = 0.5;  // labels below are not projected into the heatmap
  std::uint64_t seed = 0;

  void validate() const;
};

struct DatagenStats {
  int scenes = 0;
  int centers = 0;
  int regions = 0;
  int labeled_regions = 0;
  long long labels = 0;
  int noise_centers = 0;
  int dropped_centers = 0;

  double invalid_fraction() const { return regions > 0 ? 1.0 - static_cast<double>(labeled_regions) / regions : 0.0; }
};

nlohmann::json to_json_stats(const DatagenStats& stats);

struct LabelCenter {
  Pixel pixel;
  bool noise = false;
};

/// Pixel of each grasp center; centers behind the camera or outside the
/// image are dropped.
std::vector<Pixel> project_to_planar(const SceneLabels& labels, const Intrinsics& intr, double min_score = 0.0);

/// Per-pixel max of Gaussian kernels at the label pixels, blurred and
/// rescaled to a peak of 1. All zeros when there are no labels.
Heatmap render_label_heatmap(const std::vector<Pixel>& pixels, int height, int width, double sigma_k,
                             double sigma_blur);

/// Separable Gaussian blur (radius ceil(3 sigma), zero padding).
Heatmap gaussian_blur(const Heatmap& map, double sigma);

/// Per grid cell the argmax pixel among valid-depth pixels when it reaches
/// `threshold`, plus a random valid pixel in a `noise_frac` share of cells.
/// Cells are visited in row-major order.
std::vector<LabelCenter> sample_label_centers(const Heatmap& heatmap, const PointCloud& cloud, int cell_px,
                                              double threshold, double noise_frac, std::uint64_t rng_seed);

/// Region crop around `frame` with every label within kLabelRadius of its
/// center. Throws EmptyRegion when fewer than `k_min` points are in range.
RegionSample make_region_sample(const PointCloud& cloud, const SceneLabels& labels, const RegionFrame& frame,
                                double radius, int n_points, int k_min = kMinRegionPoints);

struct Dataset {
  std::vector<RegionSample> samples;
  DatagenStats stats;
};

/// Regions for every scene in order. Output depends only on the inputs and
/// config (not on the worker count).
Dataset generate_dataset(const std::vector<std::pair<Scene, SceneLabels>>& scenes, const DatagenConfig& config);

std::string encode_record(const RegionSample& sample);
/// Decodes one record starting at `offset` and advances it.
RegionSample decode_record(std::string_view bytes, std::size_t& offset);
/// Decodes a buffer holding exactly one record.
RegionSample decode_record(std::string_view bytes);

std::string encode_dataset(const std::vector<RegionSample>& samples);
std::vector<RegionSample> decode_dataset(std::string_view bytes);
void write_dataset(const std::filesystem::path& path, const std::vector<RegionSample>& samples);
std::vector<RegionSample> read_dataset(const std::filesystem::path& path);

}  // namespace flexlog
