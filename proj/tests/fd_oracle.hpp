#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "flexlog/model.hpp"

namespace flexlog::oracle {

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.n_points = 16;
  c.embed_dim = 8;
  c.group_size = 8;
  return c;
}

inline RegionSample random_region(std::mt19937_64& rng, int n_points, int n_labels) {
  std::uniform_real_distribution<float> u(-1.0f, 1.0f), a(-1.5f, 1.5f), s(0.0f, 1.0f);
  RegionSample r;
  r.points.resize(3, n_points);
  for (int i = 0; i < n_points; ++i) {
    Eigen::Vector3f p(u(rng), u(rng), u(rng));
    while (p.norm() > 1.0f) p = Eigen::Vector3f(u(rng), u(rng), u(rng));
    r.points.col(i) = 0.08f * p;
  }
  for (int i = 0; i < n_labels; ++i) {
    RegionLabel l;
    l.dt = 0.015f * Eigen::Vector3f(u(rng), u(rng), u(rng)) / std::sqrt(3.0f);
    l.theta = a(rng);
    l.gamma = a(rng);
    l.beta = a(rng);
    l.width = 0.1f * s(rng);
    l.score = s(rng);
    r.labels.push_back(l);
  }
  return r;
}

inline TrainItem make_item(const RegionSample& s, const AnchorSet& anchors, const ModelConfig& config) {
  return TrainItem{make_encoder_plan(s.points, config), assign_targets(s, anchors, config)};
}

/// Parameters with every entry (biases included) perturbed away from init.
inline ModelParams random_params(std::mt19937_64& rng, const ModelConfig& config) {
  ModelParams p = init_params(config, rng());
  std::normal_distribution<double> n(0.0, 0.1);
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] += n(rng);
  return p;
}

/// Central differences of the batch mean loss. Each item's activation
/// pattern at `params` is replayed so kinks are not straddled.
inline Eigen::VectorXd fd_gradient(const ModelParams& params, const std::vector<TrainItem>& batch,
                                   const ModelConfig& config, double step) {
  std::vector<ActivationPattern> patterns(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) item_loss_gradient(params, batch[b], config, nullptr, &patterns[b]);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(params.size());
  ModelParams p = params;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double x = p[i];
    double sum = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      p[i] = x + step;
      const double hi = item_loss_gradient(p, batch[b], config, nullptr, nullptr, &patterns[b]).total;
      p[i] = x - step;
      const double lo = item_loss_gradient(p, batch[b], config, nullptr, nullptr, &patterns[b]).total;
      sum += (hi - lo) / (2.0 * step);
    }
    p[i] = x;
    g[i] = sum / static_cast<double>(batch.size());
  }
  return g;
}

inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b, double floor = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), floor});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace flexlog::oracle
