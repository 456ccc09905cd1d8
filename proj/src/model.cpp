#include "flexlog/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "flexlog/parallel.hpp"

namespace flexlog {
namespace {

using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;
using CMat = Eigen::Map<const MatX>;
using CVec = Eigen::Map<const VecX>;
using MMat = Eigen::Map<MatX>;
using MVec = Eigen::Map<VecX>;

constexpr double kAffineEps = 1e-5;

CMat mat(const ModelParams& p, const ParamSlice& s) { return CMat(p.data() + s.offset, s.rows, s.cols); }
CVec vec(const ModelParams& p, const ParamSlice& s) { return CVec(p.data() + s.offset, s.size()); }
MMat mat(VecX& g, const ParamSlice& s) { return MMat(g.data() + s.offset, s.rows, s.cols); }
MVec vec(VecX& g, const ParamSlice& s) { return MVec(g.data() + s.offset, s.size()); }

std::string stage_name(int s, const char* field) { return "stage" + std::to_string(s) + "." + field; }

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
double smooth_l1_grad(double x) { return std::abs(x) < 1.0 ? x : (x > 0.0 ? 1.0 : -1.0); }

VecX softmax(const VecX& z) {
  VecX e = (z.array() - z.maxCoeff()).exp();
  return e / e.sum();
}

// Records or replays ReLU masks and max-pool choices in call order.
class Switches {
 public:
  Switches(ActivationPattern* record, const ActivationPattern* replay) : record_(record), replay_(replay) {}

  std::vector<std::uint8_t> relu(MatX& z) {
    std::vector<std::uint8_t> m;
    if (replay_) {
      m = replay_->relu.at(relu_i_++);
      if (m.size() != static_cast<std::size_t>(z.size())) throw Error(ErrorCode::DimensionMismatch, "pattern mismatch");
    } else {
      m.resize(z.size());
      for (Eigen::Index i = 0; i < z.size(); ++i) m[i] = z.data()[i] > 0.0;
    }
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      if (!m[i]) z.data()[i] = 0.0;
    }
    if (record_) record_->relu.push_back(m);
    return m;
  }

  // Column-wise max of x over column ranges [offsets[g], offsets[g+1]).
  std::vector<int> group_max(const MatX& x, const std::vector<int>& offsets, MatX& out) {
    const Eigen::Index rows = x.rows();
    const int groups = static_cast<int>(offsets.size()) - 1;
    std::vector<int> arg;
    if (replay_) {
      arg = replay_->argmax.at(arg_i_++);
      if (arg.size() != static_cast<std::size_t>(rows * groups)) {
        throw Error(ErrorCode::DimensionMismatch, "pattern mismatch");
      }
    } else {
      arg.resize(rows * groups);
      for (int g = 0; g < groups; ++g) {
        for (Eigen::Index r = 0; r < rows; ++r) {
          int best = offsets[g];
          for (int t = offsets[g] + 1; t < offsets[g + 1]; ++t) {
            if (x(r, t) > x(r, best)) best = t;
          }
          arg[g * rows + r] = best;
        }
      }
    }
    out.resize(rows, groups);
    for (int g = 0; g < groups; ++g) {
      for (Eigen::Index r = 0; r < rows; ++r) out(r, g) = x(r, arg[g * rows + r]);
    }
    if (record_) record_->argmax.push_back(arg);
    return arg;
  }

 private:
  ActivationPattern* record_;
  const ActivationPattern* replay_;
  std::size_t relu_i_ = 0;
  std::size_t arg_i_ = 0;
};

struct StageCache {
  MatX dcol, dn, xin, h1, u, h2, p, v, q;
  std::vector<std::uint8_t> m1, m2, m3, m4, m5;
  std::vector<int> arg;
  double sigma = 0.0;
  double s_inv = 0.0;
};

struct EncoderCache {
  MatX f0;
  std::vector<std::uint8_t> m0;
  std::vector<StageCache> stages;
  std::vector<int> final_arg;
};

struct HeadCache {
  VecX f, hc, w, u, ht, ot, prob, v, hb, ob, ho;
  std::vector<std::uint8_t> mc, mt, mb, mo;
};

VecX encode(const EncoderPlan& plan, const ModelParams& p, const ParamLayout& L, const ModelConfig& c, Switches& sw,
            EncoderCache& cache) {
  const int D = c.embed_dim;
  MatX z0 = (mat(p, L["embed.W"]) * plan.points).colwise() + vec(p, L["embed.b"]);
  cache.m0 = sw.relu(z0);
  cache.f0 = std::move(z0);
  cache.stages.assign(plan.stages.size(), {});

  const MatX* feat = &cache.f0;
  Eigen::Matrix3Xd level = plan.points;
  for (std::size_t s = 0; s < plan.stages.size(); ++s) {
    const auto& sp = plan.stages[s];
    StageCache& sc = cache.stages[s];
    const int T = static_cast<int>(sp.members.size());
    const int M = static_cast<int>(sp.centers.size());
    const double r = c.group_radius * std::ldexp(1.0, static_cast<int>(s));
    const int si = static_cast<int>(s);

    sc.dcol.resize(D, T);
    sc.xin.resize(2 * D + 3, T);
    for (int t = 0; t < T; ++t) {
      const int j = sp.members[t];
      const int ctr = sp.centers[sp.member_group[t]];
      sc.dcol.col(t) = feat->col(j) - feat->col(ctr);
      sc.xin.block(D, t, D, 1) = feat->col(ctr);
      sc.xin.block(2 * D, t, 3, 1) = (level.col(j) - level.col(ctr)) / r;
    }
    sc.sigma = std::sqrt(sc.dcol.squaredNorm() / (static_cast<double>(T) * D));
    sc.s_inv = 1.0 / (sc.sigma + kAffineEps);
    sc.dn = sc.dcol * sc.s_inv;
    const auto alpha = vec(p, L[stage_name(si, "alpha")]);
    const auto beta = vec(p, L[stage_name(si, "beta")]);
    sc.xin.topRows(D) = (sc.dn.array().colwise() * alpha.array()).colwise() + beta.array();

    MatX z1 = (mat(p, L[stage_name(si, "W1")]) * sc.xin).colwise() + vec(p, L[stage_name(si, "b1")]);
    sc.m1 = sw.relu(z1);
    sc.h1 = std::move(z1);
    MatX z2 = (mat(p, L[stage_name(si, "W2")]) * sc.h1).colwise() + vec(p, L[stage_name(si, "b2")]);
    sc.m2 = sw.relu(z2);
    sc.u = std::move(z2);
    MatX z3 = (sc.h1 + mat(p, L[stage_name(si, "W3")]) * sc.u).colwise() + vec(p, L[stage_name(si, "b3")]);
    sc.m3 = sw.relu(z3);
    sc.h2 = std::move(z3);

    sc.arg = sw.group_max(sc.h2, sp.group_offsets, sc.p);
    MatX z4 = (mat(p, L[stage_name(si, "W4")]) * sc.p).colwise() + vec(p, L[stage_name(si, "b4")]);
    sc.m4 = sw.relu(z4);
    sc.v = std::move(z4);
    MatX z5 = (sc.p + mat(p, L[stage_name(si, "W5")]) * sc.v).colwise() + vec(p, L[stage_name(si, "b5")]);
    sc.m5 = sw.relu(z5);
    sc.q = std::move(z5);

    Eigen::Matrix3Xd next(3, M);
    for (int g = 0; g < M; ++g) next.col(g) = level.col(sp.centers[g]);
    level = std::move(next);
    feat = &sc.q;
  }

  const int M = static_cast<int>(feat->cols());
  MatX pooled;
  cache.final_arg = sw.group_max(*feat, {0, M}, pooled);
  VecX f(2 * D);
  f.head(D) = pooled.col(0);
  f.tail(D) = feat->rowwise().mean();
  return f;
}

void encode_backward(const EncoderPlan& plan, const ModelParams& p, const ParamLayout& L, const ModelConfig& c,
                     const EncoderCache& cache, const VecX& df, VecX& grad) {
  const int D = c.embed_dim;
  const int S = static_cast<int>(plan.stages.size());
  const MatX& last = S > 0 ? cache.stages.back().q : cache.f0;
  const int M = static_cast<int>(last.cols());
  MatX dfeat = MatX::Zero(D, M);
  for (int ch = 0; ch < D; ++ch) {
    dfeat(ch, cache.final_arg[ch]) += df[ch];
    dfeat.row(ch).array() += df[D + ch] / M;
  }

  for (int s = S - 1; s >= 0; --s) {
    const auto& sp = plan.stages[s];
    const StageCache& sc = cache.stages[s];
    const int T = static_cast<int>(sp.members.size());
    const int groups = static_cast<int>(sp.centers.size());
    const MatX& fprev = s > 0 ? cache.stages[s - 1].q : cache.f0;

    MatX dz5 = dfeat;
    for (Eigen::Index i = 0; i < dz5.size(); ++i) {
      if (!sc.m5[i]) dz5.data()[i] = 0.0;
    }
    MatX dp = dz5;
    mat(grad, L[stage_name(s, "W5")]) += dz5 * sc.v.transpose();
    vec(grad, L[stage_name(s, "b5")]) += dz5.rowwise().sum();
    MatX dz4 = mat(p, L[stage_name(s, "W5")]).transpose() * dz5;
    for (Eigen::Index i = 0; i < dz4.size(); ++i) {
      if (!sc.m4[i]) dz4.data()[i] = 0.0;
    }
    mat(grad, L[stage_name(s, "W4")]) += dz4 * sc.p.transpose();
    vec(grad, L[stage_name(s, "b4")]) += dz4.rowwise().sum();
    dp += mat(p, L[stage_name(s, "W4")]).transpose() * dz4;

    MatX dz3 = MatX::Zero(D, T);
    for (int g = 0; g < groups; ++g) {
      for (int ch = 0; ch < D; ++ch) dz3(ch, sc.arg[g * D + ch]) += dp(ch, g);
    }
    for (Eigen::Index i = 0; i < dz3.size(); ++i) {
      if (!sc.m3[i]) dz3.data()[i] = 0.0;
    }
    MatX dh1 = dz3;
    mat(grad, L[stage_name(s, "W3")]) += dz3 * sc.u.transpose();
    vec(grad, L[stage_name(s, "b3")]) += dz3.rowwise().sum();
    MatX dz2 = mat(p, L[stage_name(s, "W3")]).transpose() * dz3;
    for (Eigen::Index i = 0; i < dz2.size(); ++i) {
      if (!sc.m2[i]) dz2.data()[i] = 0.0;
    }
    mat(grad, L[stage_name(s, "W2")]) += dz2 * sc.h1.transpose();
    vec(grad, L[stage_name(s, "b2")]) += dz2.rowwise().sum();
    dh1 += mat(p, L[stage_name(s, "W2")]).transpose() * dz2;
    for (Eigen::Index i = 0; i < dh1.size(); ++i) {
      if (!sc.m1[i]) dh1.data()[i] = 0.0;
    }
    mat(grad, L[stage_name(s, "W1")]) += dh1 * sc.xin.transpose();
    vec(grad, L[stage_name(s, "b1")]) += dh1.rowwise().sum();
    const MatX dxin = mat(p, L[stage_name(s, "W1")]).transpose() * dh1;

    const auto alpha = vec(p, L[stage_name(s, "alpha")]);
    const MatX da = dxin.topRows(D);
    vec(grad, L[stage_name(s, "alpha")]) += (da.array() * sc.dn.array()).rowwise().sum().matrix();
    vec(grad, L[stage_name(s, "beta")]) += da.rowwise().sum();
    const MatX ddn = (da.array().colwise() * alpha.array()).matrix();
    MatX ddcol = ddn * sc.s_inv;
    if (sc.sigma > 0.0) {
      const double dsigma = -(ddn.array() * sc.dcol.array()).sum() * sc.s_inv * sc.s_inv;
      ddcol += sc.dcol * (dsigma / (static_cast<double>(T) * D * sc.sigma));
    }

    MatX dprev = MatX::Zero(D, fprev.cols());
    for (int t = 0; t < T; ++t) {
      const int j = sp.members[t];
      const int ctr = sp.centers[sp.member_group[t]];
      dprev.col(j) += ddcol.col(t);
      dprev.col(ctr) -= ddcol.col(t);
      dprev.col(ctr) += dxin.block(D, t, D, 1);
    }
    dfeat = std::move(dprev);
  }

  for (Eigen::Index i = 0; i < dfeat.size(); ++i) {
    if (!cache.m0[i]) dfeat.data()[i] = 0.0;
  }
  mat(grad, L["embed.W"]) += dfeat * plan.points.transpose();
  vec(grad, L["embed.b"]) += dfeat.rowwise().sum();
}

VecX dense_relu(const CMat& w, const VecX& x, Switches& sw, std::vector<std::uint8_t>& mask) {
  MatX z = w * x;
  mask = sw.relu(z);
  return z;
}

VecX concat(std::initializer_list<const VecX*> parts) {
  Eigen::Index n = 0;
  for (const VecX* v : parts) n += v->size();
  VecX out(n);
  Eigen::Index at = 0;
  for (const VecX* v : parts) {
    out.segment(at, v->size()) = *v;
    at += v->size();
  }
  return out;
}

RegionPrediction heads(const VecX& f, const ModelParams& p, const ParamLayout& L, const ModelConfig& c, Switches& sw,
                       HeadCache& hc) {
  const int k = c.k_theta, n = c.n_anchor;
  hc.f = f;
  hc.hc = dense_relu(mat(p, L["collision.W1"]), f, sw, hc.mc);
  hc.w = mat(p, L["collision.W2"]) * hc.hc + vec(p, L["collision.b2"]);
  hc.u = concat({&hc.f, &hc.w});
  hc.ht = dense_relu(mat(p, L["theta.W1"]), hc.u, sw, hc.mt);
  hc.ot = mat(p, L["theta.W2"]) * hc.ht + vec(p, L["theta.b2"]);
  hc.prob = softmax(hc.ot.head(k));
  hc.v = concat({&hc.f, &hc.w, &hc.prob});
  hc.hb = dense_relu(mat(p, L["orient.W1"]), hc.v, sw, hc.mb);
  hc.ob = mat(p, L["orient.W2"]) * hc.hb + vec(p, L["orient.b2"]);
  hc.ho = dense_relu(mat(p, L["offset.W1"]), hc.u, sw, hc.mo);

  RegionPrediction pred;
  pred.theta_logits = hc.ot.head(k);
  pred.theta_residual = hc.ot.tail(k);
  pred.beta_logits = hc.ob.head(n);
  pred.gamma_logits = hc.ob.tail(n);
  pred.width_raw = hc.w;
  pred.offset = mat(p, L["offset.W2"]) * hc.ho + vec(p, L["offset.b2"]);
  return pred;
}

VecX masked(VecX x, const std::vector<std::uint8_t>& m) {
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (!m[i]) x[i] = 0.0;
  }
  return x;
}

struct PredGrad {
  VecX theta_logits, theta_residual, beta_logits, gamma_logits, width_raw;
  Vec3 offset = Vec3::Zero();
};

VecX heads_backward(const ModelParams& p, const ParamLayout& L, const ModelConfig& c, const HeadCache& hc,
                    const PredGrad& dpred, VecX& grad) {
  const int F = c.feature_dim(), k = c.k_theta, nA = c.combo_count();
  VecX df = VecX::Zero(F);
  VecX dw = dpred.width_raw;

  VecX dob(2 * c.n_anchor);
  dob << dpred.beta_logits, dpred.gamma_logits;
  mat(grad, L["orient.W2"]) += dob * hc.hb.transpose();
  vec(grad, L["orient.b2"]) += dob;
  const VecX dzb = masked(mat(p, L["orient.W2"]).transpose() * dob, hc.mb);
  mat(grad, L["orient.W1"]) += dzb * hc.v.transpose();
  const VecX dv = mat(p, L["orient.W1"]).transpose() * dzb;
  df += dv.head(F);
  dw += dv.segment(F, nA);
  const VecX dprob = dv.tail(k);

  VecX dot(2 * k);
  dot << dpred.theta_logits, dpred.theta_residual;
  dot.head(k) += (hc.prob.array() * (dprob.array() - hc.prob.dot(dprob))).matrix();

  const VecX doff = dpred.offset;
  mat(grad, L["offset.W2"]) += doff * hc.ho.transpose();
  vec(grad, L["offset.b2"]) += doff;
  const VecX dzo = masked(mat(p, L["offset.W2"]).transpose() * doff, hc.mo);
  mat(grad, L["offset.W1"]) += dzo * hc.u.transpose();
  VecX du = mat(p, L["offset.W1"]).transpose() * dzo;

  mat(grad, L["theta.W2"]) += dot * hc.ht.transpose();
  vec(grad, L["theta.b2"]) += dot;
  const VecX dzt = masked(mat(p, L["theta.W2"]).transpose() * dot, hc.mt);
  mat(grad, L["theta.W1"]) += dzt * hc.u.transpose();
  du += mat(p, L["theta.W1"]).transpose() * dzt;
  df += du.head(F);
  dw += du.tail(nA);

  mat(grad, L["collision.W2"]) += dw * hc.hc.transpose();
  vec(grad, L["collision.b2"]) += dw;
  const VecX dzc = masked(mat(p, L["collision.W2"]).transpose() * dw, hc.mc);
  mat(grad, L["collision.W1"]) += dzc * hc.f.transpose();
  df += mat(p, L["collision.W1"]).transpose() * dzc;
  return df;
}

double focal_from_logit(double z, bool positive, double alpha, double gamma, double* dz) {
  const double p = sigmoid(z);
  if (positive) {
    const double log_p = -softplus(-z);
    const double a = alpha * std::pow(1.0 - p, gamma);
    if (dz) *dz = a * (gamma * p * log_p - (1.0 - p));
    return -a * log_p;
  }
  const double log_q = -softplus(z);
  const double a = (1.0 - alpha) * std::pow(p, gamma);
  if (dz) *dz = -a * (gamma * (1.0 - p) * log_q - p);
  return -a * log_q;
}

LossBreakdown loss_impl(const RegionPrediction& pred, const TrainTargets& t, const ModelConfig& c, PredGrad* g) {
  LossBreakdown out;
  const int k = c.k_theta, n = c.n_anchor;
  if (g) {
    g->theta_logits = VecX::Zero(k);
    g->theta_residual = VecX::Zero(k);
    g->beta_logits = VecX::Zero(n);
    g->gamma_logits = VecX::Zero(n);
    g->width_raw = VecX::Zero(c.combo_count());
    g->offset.setZero();
  }
  if (!t.valid) return out;

  const double zmax = pred.theta_logits.maxCoeff();
  const double lse = zmax + std::log((pred.theta_logits.array() - zmax).exp().sum());
  out.theta_cls = lse - pred.theta_logits[t.theta_bin];
  const double res_err = pred.theta_residual[t.theta_bin] - t.theta_res;
  out.theta_reg = smooth_l1(res_err);

  for (const auto& [combo, target] : t.widths) out.width += smooth_l1(pred.width_raw[combo] - target);
  if (!t.widths.empty()) out.width /= static_cast<double>(t.widths.size());

  for (int i = 0; i < 3; ++i) out.offset += smooth_l1(pred.offset[i] - t.offset[i]);
  out.offset /= 3.0;

  for (int i = 0; i < n; ++i) {
    double db = 0.0, dg = 0.0;
    out.anchor += focal_from_logit(pred.beta_logits[i], t.beta_multi[i], c.focal_alpha, c.focal_gamma, &db);
    out.anchor += focal_from_logit(pred.gamma_logits[i], t.gamma_multi[i], c.focal_alpha, c.focal_gamma, &dg);
    if (g) {
      g->beta_logits[i] = c.loss_d * db;
      g->gamma_logits[i] = c.loss_d * dg;
    }
  }
  out.total = c.loss_a * (out.theta_cls + out.theta_reg) + c.loss_b * out.width + c.loss_c * out.offset +
              c.loss_d * out.anchor;

  if (g) {
    g->theta_logits = c.loss_a * softmax(pred.theta_logits);
    g->theta_logits[t.theta_bin] -= c.loss_a;
    g->theta_residual[t.theta_bin] = c.loss_a * smooth_l1_grad(res_err);
    for (const auto& [combo, target] : t.widths) {
      g->width_raw[combo] = c.loss_b * smooth_l1_grad(pred.width_raw[combo] - target) /
                            static_cast<double>(t.widths.size());
    }
    for (int i = 0; i < 3; ++i) g->offset[i] = c.loss_c * smooth_l1_grad(pred.offset[i] - t.offset[i]) / 3.0;
  }
  return out;
}

void respace(std::vector<double>& a, double min_sep) {
  const int n = static_cast<int>(a.size());
  for (double& v : a) v = std::clamp(v, -kHalfPi, kHalfPi);
  for (int i = 1; i < n; ++i) a[i] = std::max(a[i], a[i - 1] + min_sep);
  a[n - 1] = std::min(a[n - 1], kHalfPi);
  for (int i = n - 2; i >= 0; --i) a[i] = std::min(a[i], a[i + 1] - min_sep);
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
  if (k_theta < 2) fail("k_theta must be >= 2");
  if (n_anchor < 2) fail("n_anchor must be >= 2");
  if (embed_dim < 1 || stage_count < 1 || group_size < 1 || n_points < 1) fail("network sizes must be positive");
  if (!(w_max > 0.0) || !(region_radius > 0.0) || !(group_radius > 0.0)) fail("radii and w_max must be > 0");
  if (loss_a < 0.0 || loss_b < 0.0 || loss_c < 0.0 || loss_d < 0.0) fail("loss weights must be >= 0");
  if (!(focal_alpha >= 0.0 && focal_alpha <= 1.0) || focal_gamma < 0.0) fail("bad focal parameters");
  if (!(learning_rate > 0.0) || batch_size < 1 || epochs < 0) fail("bad optimizer settings");
  if (!(anchor_min_separation > 0.0) || anchor_min_separation * (n_anchor - 1) > std::numbers::pi) {
    fail("anchor separation does not fit in [-pi/2, pi/2]");
  }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"n_points", c.n_points},
                     {"k_theta", c.k_theta},
                     {"n_anchor", c.n_anchor},
                     {"embed_dim", c.embed_dim},
                     {"stage_count", c.stage_count},
                     {"group_size", c.group_size},
                     {"w_max", c.w_max},
                     {"region_radius", c.region_radius},
                     {"group_radius", c.group_radius},
                     {"loss_a", c.loss_a},
                     {"loss_b", c.loss_b},
                     {"loss_c", c.loss_c},
                     {"loss_d", c.loss_d},
                     {"focal_alpha", c.focal_alpha},
                     {"focal_gamma", c.focal_gamma},
                     {"learning_rate", c.learning_rate},
                     {"batch_size", c.batch_size},
                     {"epochs", c.epochs},
                     {"anchor_min_separation", c.anchor_min_separation},
                     {"train_on_unlabeled", c.train_on_unlabeled}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.n_points = j.value("n_points", d.n_points);
  c.k_theta = j.value("k_theta", d.k_theta);
  c.n_anchor = j.value("n_anchor", d.n_anchor);
  c.embed_dim = j.value("embed_dim", d.embed_dim);
  c.stage_count = j.value("stage_count", d.stage_count);
  c.group_size = j.value("group_size", d.group_size);
  c.w_max = j.value("w_max", d.w_max);
  c.region_radius = j.value("region_radius", d.region_radius);
  c.group_radius = j.value("group_radius", d.group_radius);
  c.loss_a = j.value("loss_a", d.loss_a);
  c.loss_b = j.value("loss_b", d.loss_b);
  c.loss_c = j.value("loss_c", d.loss_c);
  c.loss_d = j.value("loss_d", d.loss_d);
  c.focal_alpha = j.value("focal_alpha", d.focal_alpha);
  c.focal_gamma = j.value("focal_gamma", d.focal_gamma);
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.epochs = j.value("epochs", d.epochs);
  c.anchor_min_separation = j.value("anchor_min_separation", d.anchor_min_separation);
  c.train_on_unlabeled = j.value("train_on_unlabeled", d.train_on_unlabeled);
}

ModelConfig small_model_config() {
  ModelConfig c;
  c.n_points = 256;
  c.embed_dim = 32;
  c.group_size = 16;
  return c;
}

ParamLayout::ParamLayout(const ModelConfig& c) {
  const int D = c.embed_dim, F = c.feature_dim(), H = c.hidden_dim(), nA = c.combo_count();
  add("embed.W", D, 3);
  add("embed.b", D, 1);
  for (int s = 0; s < c.stage_count; ++s) {
    add(stage_name(s, "alpha"), D, 1);
    add(stage_name(s, "beta"), D, 1);
    add(stage_name(s, "W1"), D, 2 * D + 3);
    add(stage_name(s, "b1"), D, 1);
    for (const char* w : {"2", "3", "4", "5"}) {
      add(stage_name(s, (std::string("W") + w).c_str()), D, D);
      add(stage_name(s, (std::string("b") + w).c_str()), D, 1);
    }
  }
  add("collision.W1", H, F);
  add("collision.W2", nA, H);
  add("collision.b2", nA, 1);
  add("theta.W1", H, F + nA);
  add("theta.W2", 2 * c.k_theta, H);
  add("theta.b2", 2 * c.k_theta, 1);
  add("orient.W1", H, F + nA + c.k_theta);
  add("orient.W2", 2 * c.n_anchor, H);
  add("orient.b2", 2 * c.n_anchor, 1);
  add("offset.W1", H, F + nA);
  add("offset.W2", 3, H);
  add("offset.b2", 3, 1);
}

void ParamLayout::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  slices_.push_back({name, size_, rows, cols});
  size_ += rows * cols;
}

const ParamSlice& ParamLayout::operator[](const std::string& name) const {
  for (const auto& s : slices_) {
    if (s.name == name) return s;
  }
  throw Error(ErrorCode::InvalidArgument, "no parameter slice '" + name + "'");
}

ModelParams init_params(const ModelConfig& config, std::uint64_t rng_seed) {
  config.validate();
  const ParamLayout layout(config);
  ModelParams p = ModelParams::Zero(layout.size());
  std::mt19937_64 rng(mix_seed(rng_seed, 0x1a1dULL));
  for (const auto& s : layout.slices()) {
    const bool is_alpha = s.name.ends_with(".alpha");
    if (is_alpha) {
      p.segment(s.offset, s.size()).setOnes();
      continue;
    }
    if (s.cols == 1) continue;  // biases and affine shifts
    const double bound = std::sqrt(3.0 / static_cast<double>(s.cols));
    for (Eigen::Index i = 0; i < s.size(); ++i) p[s.offset + i] = uniform(rng, -bound, bound);
  }
  return p;
}

AnchorSet uniform_anchors(int n_anchor) {
  if (n_anchor < 1) throw Error(ErrorCode::InvalidArgument, "n_anchor must be >= 1");
  AnchorSet a;
  for (int i = 0; i < n_anchor; ++i) a.beta.push_back(-kHalfPi + (i + 0.5) * std::numbers::pi / n_anchor);
  a.gamma = a.beta;
  return a;
}

std::vector<double> refit_anchors(const std::vector<double>& values, int n_anchor, double min_separation,
                                  const std::vector<double>& initial) {
  if (n_anchor < 1) throw Error(ErrorCode::InvalidArgument, "n_anchor must be >= 1");
  if (values.empty()) throw Error(ErrorCode::DegenerateLabels, "no label angles");
  std::vector<double> v = values;
  std::sort(v.begin(), v.end());
  if (n_anchor == 1) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    return {std::clamp(mean, -kHalfPi, kHalfPi)};
  }
  if (v.front() == v.back()) throw Error(ErrorCode::DegenerateLabels, "all label angles are identical");
  if (min_separation * (n_anchor - 1) > std::numbers::pi) {
    throw Error(ErrorCode::InvalidArgument, "anchor separation does not fit in [-pi/2, pi/2]");
  }

  const std::size_t m = v.size();
  std::vector<double> a(n_anchor);
  if (static_cast<int>(initial.size()) == n_anchor) {
    a = initial;
    std::sort(a.begin(), a.end());
  } else {
    for (int i = 0; i < n_anchor; ++i) {
      const double pos = (i + 0.5) / n_anchor * static_cast<double>(m - 1);
      const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
      const std::size_t hi = std::min(lo + 1, m - 1);
      a[i] = v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    }
  }

  std::vector<double> prefix(m + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i) prefix[i + 1] = prefix[i] + v[i];
  for (int iter = 0; iter < 1000; ++iter) {
    double moved = 0.0;
    std::vector<double> next = a;
    std::size_t begin = 0;
    for (int i = 0; i < n_anchor; ++i) {
      std::size_t end = m;
      if (i + 1 < n_anchor) {
        const double mid = 0.5 * (a[i] + a[i + 1]);
        end = static_cast<std::size_t>(std::upper_bound(v.begin(), v.end(), mid) - v.begin());
      }
      end = std::max(end, begin);
      if (end > begin) next[i] = (prefix[end] - prefix[begin]) / static_cast<double>(end - begin);
      moved = std::max(moved, std::abs(next[i] - a[i]));
      begin = end;
    }
    a = std::move(next);
    if (moved < 1e-4) break;
  }
  respace(a, min_separation);
  return a;
}

double theta_bin_center(int bin, int k_theta) { return -kHalfPi + (bin + 0.5) * std::numbers::pi / k_theta; }

int nearest_anchor(const std::vector<double>& anchors, double value) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(anchors.size()); ++i) {
    if (std::abs(anchors[i] - value) < std::abs(anchors[best] - value)) best = i;
  }
  return best;
}

TrainTargets assign_targets(const RegionSample& sample, const AnchorSet& anchors, const ModelConfig& config) {
  TrainTargets t;
  const int n = config.n_anchor, k = config.k_theta;
  if (static_cast<int>(anchors.beta.size()) != n || static_cast<int>(anchors.gamma.size()) != n) {
    throw Error(ErrorCode::DimensionMismatch, "anchor count does not match config");
  }
  t.beta_multi.assign(n, 0);
  t.gamma_multi.assign(n, 0);
  if (sample.labels.empty()) return t;
  t.valid = true;

  // Highest score; among equal scores the label closest to the center.
  std::size_t primary = 0;
  for (std::size_t i = 1; i < sample.labels.size(); ++i) {
    const RegionLabel& a = sample.labels[i];
    const RegionLabel& b = sample.labels[primary];
    if (a.score > b.score || (a.score == b.score && a.dt.squaredNorm() < b.dt.squaredNorm())) primary = i;
  }
  const RegionLabel& pl = sample.labels[primary];
  const double bin_width = std::numbers::pi / k;
  const double theta = pl.theta;
  t.theta_bin = std::clamp(static_cast<int>(std::floor((theta + kHalfPi) / bin_width)), 0, k - 1);
  t.theta_res = std::clamp((theta - theta_bin_center(t.theta_bin, k)) / (bin_width / 2.0), -1.0, 1.0);
  t.offset = pl.dt.cast<double>() / kLabelRadius;

  std::map<int, std::pair<float, double>> combos;  // combo -> (score, width)
  for (const auto& l : sample.labels) {
    const int ib = nearest_anchor(anchors.beta, l.beta);
    const int ig = nearest_anchor(anchors.gamma, l.gamma);
    t.beta_multi[ib] = 1;
    t.gamma_multi[ig] = 1;
    const double w = std::clamp(static_cast<double>(l.width) / config.w_max, 0.0, 1.0);
    const auto [it, inserted] = combos.try_emplace(ib * n + ig, l.score, w);
    if (!inserted && l.score > it->second.first) it->second = {l.score, w};
  }
  for (const auto& [combo, sw] : combos) t.widths.emplace_back(combo, sw.second);
  return t;
}

double smooth_l1(double x) {
  const double a = std::abs(x);
  return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

double focal_loss(double p, bool positive, double alpha, double gamma) {
  if (positive) {
    const double w = alpha * std::pow(1.0 - p, gamma);
    return w == 0.0 ? 0.0 : -w * std::log(p);
  }
  const double w = (1.0 - alpha) * std::pow(p, gamma);
  return w == 0.0 ? 0.0 : -w * std::log(1.0 - p);
}

LossBreakdown loss(const RegionPrediction& pred, const TrainTargets& targets, const ModelConfig& config) {
  return loss_impl(pred, targets, config, nullptr);
}

EncoderPlan make_encoder_plan(const Points3& points, const ModelConfig& config) {
  if (points.cols() == 0) throw Error(ErrorCode::EmptyRegion, "region has no points");
  EncoderPlan plan;
  Points3 x = points / config.region_radius;
  if (x.cols() > config.n_points) {
    x = gather(x, farthest_point_sample(x, config.n_points, nearest_point(x, Vec3::Zero())));
  }
  plan.points = x;
  Points3 level = x;
  for (int s = 0; s < config.stage_count; ++s) {
    EncoderPlan::Stage st;
    const int n = static_cast<int>(level.cols());
    const int m = std::max(1, std::min(config.n_points >> (2 * (s + 1)), n));
    st.centers = farthest_point_sample(level, m, nearest_point(level, Vec3::Zero()));
    const double r = config.group_radius * std::ldexp(1.0, s);
    const double r2 = r * r;
    st.group_offsets.push_back(0);
    std::vector<std::pair<double, int>> cand;
    for (int g = 0; g < m; ++g) {
      cand.clear();
      const Vec3 c = level.col(st.centers[g]);
      for (int j = 0; j < n; ++j) {
        const double d2 = (level.col(j) - c).squaredNorm();
        if (d2 <= r2) cand.emplace_back(d2, j);
      }
      std::sort(cand.begin(), cand.end());
      const int take = std::min<int>(config.group_size, static_cast<int>(cand.size()));
      for (int i = 0; i < take; ++i) {
        st.members.push_back(cand[i].second);
        st.member_group.push_back(g);
      }
      st.group_offsets.push_back(static_cast<int>(st.members.size()));
    }
    level = gather(level, st.centers);
    plan.stages.push_back(std::move(st));
  }
  return plan;
}

EncoderPlan make_encoder_plan(const Eigen::Matrix3Xf& points, const ModelConfig& config) {
  return make_encoder_plan(Points3(points.cast<double>()), config);
}

Eigen::VectorXd encoder_forward(const EncoderPlan& plan, const ModelParams& params, const ModelConfig& config) {
  const ParamLayout layout(config);
  if (params.size() != layout.size()) throw Error(ErrorCode::DimensionMismatch, "parameter count mismatch");
  Switches sw(nullptr, nullptr);
  EncoderCache cache;
  return encode(plan, params, layout, config, sw, cache);
}

Eigen::VectorXd encoder_forward(const Points3& points, const ModelParams& params, const ModelConfig& config) {
  return encoder_forward(make_encoder_plan(points, config), params, config);
}

RegionPrediction heads_forward(const Eigen::VectorXd& feature, const ModelParams& params, const ModelConfig& config) {
  const ParamLayout layout(config);
  if (params.size() != layout.size()) throw Error(ErrorCode::DimensionMismatch, "parameter count mismatch");
  if (feature.size() != config.feature_dim()) throw Error(ErrorCode::DimensionMismatch, "feature size mismatch");
  Switches sw(nullptr, nullptr);
  HeadCache hc;
  return heads(feature, params, layout, config, sw, hc);
}

RegionPrediction predict(const EncoderPlan& plan, const ModelParams& params, const ModelConfig& config) {
  return heads_forward(encoder_forward(plan, params, config), params, config);
}

LossBreakdown item_loss_gradient(const ModelParams& params, const TrainItem& item, const ModelConfig& config,
                                 Eigen::VectorXd* grad, ActivationPattern* record, const ActivationPattern* replay,
                                 RegionPrediction* pred_out) {
  const ParamLayout layout(config);
  if (params.size() != layout.size()) throw Error(ErrorCode::DimensionMismatch, "parameter count mismatch");
  if (grad) grad->setZero(layout.size());
  if (!item.targets.valid) return {};
  Switches sw(record, replay);
  EncoderCache ec;
  HeadCache hc;
  const VecX f = encode(item.plan, params, layout, config, sw, ec);
  const RegionPrediction pred = heads(f, params, layout, config, sw, hc);
  PredGrad dpred;
  const LossBreakdown out = loss_impl(pred, item.targets, config, grad ? &dpred : nullptr);
  if (pred_out) *pred_out = pred;
  if (grad) {
    const VecX df = heads_backward(params, layout, config, hc, dpred, *grad);
    encode_backward(item.plan, params, layout, config, ec, df, *grad);
  }
  return out;
}

LossBreakdown batch_loss_gradient(const ModelParams& params, const std::vector<const TrainItem*>& batch,
                                  const ModelConfig& config, Eigen::VectorXd* grad, int workers, int* theta_hits) {
  if (batch.empty()) throw Error(ErrorCode::EmptyInput, "empty batch");
  std::vector<LossBreakdown> parts(batch.size());
  std::vector<VecX> grads(grad ? batch.size() : 0);
  std::vector<std::uint8_t> hits(batch.size(), 0);
  parallel_for(
      batch.size(),
      [&](std::size_t i) {
        RegionPrediction pred;
        parts[i] = item_loss_gradient(params, *batch[i], config, grad ? &grads[i] : nullptr, nullptr, nullptr,
                                      theta_hits ? &pred : nullptr);
        if (theta_hits && batch[i]->targets.valid) {
          Eigen::Index arg = 0;
          pred.theta_logits.maxCoeff(&arg);
          hits[i] = arg == batch[i]->targets.theta_bin;
        }
      },
      workers);
  if (theta_hits) *theta_hits = std::accumulate(hits.begin(), hits.end(), 0);

  LossBreakdown mean;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& l : parts) {
    mean.total += l.total * inv;
    mean.theta_cls += l.theta_cls * inv;
    mean.theta_reg += l.theta_reg * inv;
    mean.width += l.width * inv;
    mean.offset += l.offset * inv;
    mean.anchor += l.anchor * inv;
  }
  if (!std::isfinite(mean.total)) throw Error(ErrorCode::NonFiniteLoss, "loss is not finite");
  if (grad) {
    grad->setZero(params.size());
    for (const auto& g : grads) *grad += g;
    *grad *= inv;
    if (!grad->allFinite()) throw Error(ErrorCode::NonFiniteLoss, "gradient is not finite");
  }
  return mean;
}

Eigen::VectorXd gradient(const ModelParams& params, const std::vector<TrainItem>& batch, const ModelConfig& config) {
  std::vector<const TrainItem*> ptrs;
  for (const auto& item : batch) ptrs.push_back(&item);
  VecX g;
  batch_loss_gradient(params, ptrs, config, &g);
  return g;
}

}  // namespace flexlog
