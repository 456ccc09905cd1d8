#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "flexlog/cloud.hpp"
#include "flexlog/postproc.hpp"

namespace flexlog::oracle {

// Greedy furthest point sampling with a plain running-minimum array, O(n*m).
inline Indices fps(const Points3& p, int m, int seed) {
  const int n = static_cast<int>(p.cols());
  Indices out{seed};
  std::vector<bool> taken(n, false);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  taken[seed] = true;
  while (static_cast<int>(out.size()) < std::min(m, n)) {
    const int last = out.back();
    int best = -1;
    double best_d = -1.0;
    for (int i = 0; i < n; ++i) {
      if (taken[i]) continue;
      nearest[i] = std::min(nearest[i], (p.col(i) - p.col(last)).squaredNorm());
      if (nearest[i] > best_d) {
        best_d = nearest[i];
        best = i;
      }
    }
    out.push_back(best);
    taken[best] = true;
  }
  for (int i = 0; i < n && static_cast<int>(out.size()) < m; ++i) {
    if (!taken[i]) out.push_back(i);
  }
  return out;
}

inline Indices ball(const Points3& p, const Vec3& c, double r, int cap) {
  Indices in;
  for (int i = 0; i < p.cols(); ++i) {
    if ((p.col(i) - c).norm() <= r) in.push_back(i);
  }
  if (static_cast<int>(in.size()) <= cap) return in;
  Points3 sub(3, in.size());
  int nearest = 0;
  double nd = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < in.size(); ++k) {
    sub.col(k) = p.col(in[k]);
    const double d = (sub.col(k) - c).squaredNorm();
    if (d < nd) {
      nd = d;
      nearest = static_cast<int>(k);
    }
  }
  Indices out;
  for (int k : fps(sub, cap, nearest)) out.push_back(in[k]);
  return out;
}

// Quadratic greedy NMS over a stable descending-score order.
inline std::vector<DecodedGrasp> nms(const std::vector<DecodedGrasp>& g, double t, double r) {
  std::vector<int> order(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return g[a].grasp.score > g[b].grasp.score; });
  std::vector<DecodedGrasp> kept;
  for (int i : order) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if ((k.grasp.t - g[i].grasp.t).norm() < t &&
          rotation_distance(k.grasp.rotation(), g[i].grasp.rotation()) < r) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(g[i]);
  }
  return kept;
}

inline Points3 random_cloud(std::mt19937_64& rng, int n, double extent) {
  std::uniform_real_distribution<double> u(-extent, extent);
  Points3 p(3, n);
  for (int i = 0; i < n; ++i) p.col(i) = Vec3(u(rng), u(rng), u(rng));
  return p;
}

inline std::vector<DecodedGrasp> random_grasps(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> pos(-0.1, 0.1), ang(-1.5, 1.5), sc(0.0, 1.0);
  std::uniform_int_distribution<int> coarse(0, 4);
  std::vector<DecodedGrasp> out(n);
  for (auto& d : out) {
    d.grasp.t = Vec3(pos(rng), pos(rng), 0.5 + pos(rng));
    d.grasp.theta = ang(rng);
    d.grasp.gamma = ang(rng);
    d.grasp.beta = ang(rng);
    d.grasp.width = 0.05;
    // coarse scores produce ties
    d.grasp.score = coarse(rng) == 0 ? 0.5 : sc(rng);
  }
  return out;
}

// Prediction a perfect network would emit for these targets.
inline RegionPrediction perfect_prediction(const TrainTargets& t, const ModelConfig& c) {
  RegionPrediction p;
  p.theta_logits = Eigen::VectorXd::Constant(c.k_theta, -30.0);
  p.theta_logits[t.theta_bin] = 30.0;
  p.theta_residual = Eigen::VectorXd::Zero(c.k_theta);
  p.theta_residual[t.theta_bin] = t.theta_res;
  p.beta_logits.resize(c.n_anchor);
  p.gamma_logits.resize(c.n_anchor);
  for (int i = 0; i < c.n_anchor; ++i) {
    p.beta_logits[i] = t.beta_multi[i] ? 30.0 : -30.0;
    p.gamma_logits[i] = t.gamma_multi[i] ? 30.0 : -30.0;
  }
  p.width_raw = Eigen::VectorXd::Zero(c.combo_count());
  for (const auto& [combo, w] : t.widths) p.width_raw[combo] = w;
  p.offset = t.offset;
  return p;
}

// Index of the primary label under the assignment rule: highest score, then
// smallest offset.
inline std::size_t primary_label(const RegionSample& s) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < s.labels.size(); ++i) {
    const auto& a = s.labels[i];
    const auto& b = s.labels[best];
    if (a.score > b.score || (a.score == b.score && a.dt.squaredNorm() < b.dt.squaredNorm())) best = i;
  }
  return best;
}

}  // namespace flexlog::oracle
