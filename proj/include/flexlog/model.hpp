#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "flexlog/datagen.hpp"

namespace flexlog {

struct ModelConfig {
  int n_points = kDefaultRegionPoints;  // N, region cap
  int k_theta = 6;
  int n_anchor = 7;
  int embed_dim = 64;
  int stage_count = 2;
  int group_size = 32;
  double w_max = kDefaultMaxWidth;
  double region_radius = kDefaultRegionRadius;  // coordinate normalization
  double group_radius = 0.3;                    // first stage, in normalized units; doubles per stage

  double loss_a = 1.0;
  double loss_b = 10.0;
  double loss_c = 5.0;
  double loss_d = 1.0;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;

  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 30;
  double anchor_min_separation = 2.0 * std::numbers::pi / 180.0;
  bool train_on_unlabeled = false;

  void validate() const;
  int combo_count() const { return n_anchor * n_anchor; }
  int feature_dim() const { return 2 * embed_dim; }
  int hidden_dim() const { return 2 * embed_dim; }
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

/// Small acceptance-scale config (N=256, 32-channel embedding, groups of 16).
ModelConfig small_model_config();

struct ParamSlice {
  std::string name;
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index size() const { return rows * cols; }
};

/// Named slices of the flat parameter vector; matrices are column-major.
class ParamLayout {
 public:
  explicit ParamLayout(const ModelConfig& config);

  const ParamSlice& operator[](const std::string& name) const;
  const std::vector<ParamSlice>& slices() const { return slices_; }
  Eigen::Index size() const { return size_; }

 private:
  void add(const std::string& name, Eigen::Index rows, Eigen::Index cols);

  std::vector<ParamSlice> slices_;
  Eigen::Index size_ = 0;
};

using ModelParams = Eigen::VectorXd;

/// Uniform(+-sqrt(3 / fan_in)) weights, zero biases, affine scales 1 and
/// shifts 0.
ModelParams init_params(const ModelConfig& config, std::uint64_t rng_seed);

struct AnchorSet {
  std::vector<double> beta;
  std::vector<double> gamma;
};

/// Anchors at the centers of n equal bins over [-pi/2, pi/2].
AnchorSet uniform_anchors(int n_anchor);

/// Quantile-initialized 1-D Lloyd fit, then respaced to `min_separation`
/// inside [-pi/2, pi/2]. A non-empty `initial` warm-starts the iterations.
std::vector<double> refit_anchors(const std::vector<double>& values, int n_anchor, double min_separation,
                                  const std::vector<double>& initial = {});

double theta_bin_center(int bin, int k_theta);

struct RegionPrediction {
  Eigen::VectorXd theta_logits;
  Eigen::VectorXd theta_residual;
  Eigen::VectorXd beta_logits;
  Eigen::VectorXd gamma_logits;
  Eigen::VectorXd width_raw;  // index beta_anchor * n_anchor + gamma_anchor
  Vec3 offset = Vec3::Zero();
};

struct TrainTargets {
  bool valid = false;
  int theta_bin = 0;
  double theta_res = 0.0;
  std::vector<std::uint8_t> beta_multi;
  std::vector<std::uint8_t> gamma_multi;
  std::vector<std::pair<int, double>> widths;  // (combo, width / w_max), ascending combo
  Vec3 offset = Vec3::Zero();
};

int nearest_anchor(const std::vector<double>& anchors, double value);

TrainTargets assign_targets(const RegionSample& sample, const AnchorSet& anchors, const ModelConfig& config);

struct LossBreakdown {
  double total = 0.0;
  double theta_cls = 0.0;
  double theta_reg = 0.0;
  double width = 0.0;
  double offset = 0.0;
  double anchor = 0.0;
};

double smooth_l1(double x);
/// Binary focal loss on a probability; 0 * log(0) counts as 0.
double focal_loss(double p, bool positive, double alpha, double gamma);

LossBreakdown loss(const RegionPrediction& pred, const TrainTargets& targets, const ModelConfig& config);

/// Sampling and grouping for one region; depends only on the points.
struct EncoderPlan {
  struct Stage {
    std::vector<int> centers;         // indices into the previous level
    std::vector<int> group_offsets;   // size centers + 1
    std::vector<int> members;         // indices into the previous level
    std::vector<int> member_group;    // group of each member
  };
  Eigen::Matrix3Xd points;  // normalized coordinates, after capping to N
  std::vector<Stage> stages;
};

EncoderPlan make_encoder_plan(const Points3& points, const ModelConfig& config);
EncoderPlan make_encoder_plan(const Eigen::Matrix3Xf& points, const ModelConfig& config);

/// Global feature [max; mean] of length 2 * embed_dim.
Eigen::VectorXd encoder_forward(const EncoderPlan& plan, const ModelParams& params, const ModelConfig& config);
Eigen::VectorXd encoder_forward(const Points3& points, const ModelParams& params, const ModelConfig& config);

RegionPrediction heads_forward(const Eigen::VectorXd& feature, const ModelParams& params, const ModelConfig& config);

RegionPrediction predict(const EncoderPlan& plan, const ModelParams& params, const ModelConfig& config);

struct TrainItem {
  EncoderPlan plan;
  TrainTargets targets;
};

/// ReLU and max-pool decisions of one forward pass. Passing a recorded
/// pattern back in replays those decisions, which evaluates the smooth piece
/// the analytic gradient differentiates.
struct ActivationPattern {
  std::vector<std::vector<std::uint8_t>> relu;
  std::vector<std::vector<int>> argmax;
};

/// Loss and (when `grad` is non-null) its gradient for a single item.
LossBreakdown item_loss_gradient(const ModelParams& params, const TrainItem& item, const ModelConfig& config,
                                 Eigen::VectorXd* grad, ActivationPattern* record = nullptr,
                                 const ActivationPattern* replay = nullptr, RegionPrediction* pred_out = nullptr);

/// Mean loss over the batch and its exact gradient. Per-item gradients are
/// reduced in batch order, so the result does not depend on `workers`.
/// `theta_hits` (optional) receives the number of valid items whose arg-max
/// theta bin equals the target bin. Throws NonFiniteLoss.
LossBreakdown batch_loss_gradient(const ModelParams& params, const std::vector<const TrainItem*>& batch,
                                  const ModelConfig& config, Eigen::VectorXd* grad, int workers = 0,
                                  int* theta_hits = nullptr);

Eigen::VectorXd gradient(const ModelParams& params, const std::vector<TrainItem>& batch, const ModelConfig& config);

}  // namespace flexlog
