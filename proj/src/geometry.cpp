#include "flexlog/geometry.hpp"

#include <algorithm>

namespace flexlog {

Mat3 Grasp::rotation() const { return euler_to_rotation(theta, gamma, beta); }

Grasp compose_final_grasp(const RegionalGrasp& gp, const RegionFrame& frame, double score) {
  Grasp g;
  g.t = frame.center + gp.dt;
  g.theta = gp.theta;
  g.gamma = gp.gamma;
  g.beta = gp.beta;
  g.width = gp.width;
  g.score = score;
  return g;
}

double rotation_distance(const Mat3& R1, const Mat3& R2) {
  const double c = ((R1.transpose() * R2).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

std::optional<Mat3> gripper_rotation(const Vec3& closing_axis, const Vec3& approach) {
  Vec3 x = closing_axis.normalized();
  const Vec3 z = approach.normalized();
  if (z.z() < 0.0 || std::abs(x.dot(z)) > 1e-6) return std::nullopt;
  if (x.x() < 0.0) x = -x;
  Mat3 R;
  R.col(0) = x;
  R.col(1) = z.cross(x);
  R.col(2) = z;
  return R;
}

bool angles_in_range(double theta, double gamma, double beta) {
  auto ok = [](double a) { return a >= -kHalfPi && a <= kHalfPi; };
  return ok(theta) && ok(gamma) && ok(beta);
}

void to_json(nlohmann::json& j, const Grasp& g) {
  j = nlohmann::json{{"t", {g.t.x(), g.t.y(), g.t.z()}},
                     {"euler", {g.theta, g.gamma, g.beta}},
                     {"width", g.width},
                     {"score", g.score}};
}

void from_json(const nlohmann::json& j, Grasp& g) {
  const auto& t = j.at("t");
  const auto& e = j.at("euler");
  if (t.size() != 3 || e.size() != 3) {
    throw Error(ErrorCode::InvalidArgument, "grasp record needs 3-element t and euler");
  }
  g.t = Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
  g.theta = e[0].get<double>();
  g.gamma = e[1].get<double>();
  g.beta = e[2].get<double>();
  g.width = j.at("width").get<double>();
  g.score = j.value("score", 0.0);
}

}  // namespace flexlog
