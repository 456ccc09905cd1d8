#pragma once

#include <cmath>
#include <numbers>
#include <optional>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "json.hpp"

#include "flexlog/error.hpp"

namespace flexlog {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kHalfPi = std::numbers::pi / 2.0;
inline constexpr double kDefaultMaxWidth = 0.10;

struct Pixel {
  int u = 0;
  int v = 0;
  friend bool operator==(const Pixel&, const Pixel&) = default;
};

/// Gripper pose in the camera frame.
///
/// Orientation convention (shared by every module, the CLI and the viewer):
/// R = Rz(theta) * Ry(beta) * Rx(gamma). Column 0 of R is the closing axis,
/// column 2 the approach direction. theta is the in-plane rotation about the
/// camera's viewing axis. With all angles in [-pi/2, pi/2] the closing axis
/// has a non-negative camera-x component and the approach direction points
/// away from the camera (non-negative z).
struct Grasp {
  Vec3 t = Vec3::Zero();
  double theta = 0.0;
  double gamma = 0.0;
  double beta = 0.0;
  double width = 0.0;
  double score = 0.0;

  Mat3 rotation() const;
};

/// Grasp relative to a region center; dt is the offset from that center.
struct RegionalGrasp {
  Vec3 dt = Vec3::Zero();
  double theta = 0.0;
  double gamma = 0.0;
  double beta = 0.0;
  double width = 0.0;
};

/// Local region frame: translated to `center`, axes parallel to the camera.
struct RegionFrame {
  Vec3 center = Vec3::Zero();
  std::optional<Pixel> source_pixel;
};

struct EulerAngles {
  double theta = 0.0;
  double gamma = 0.0;
  double beta = 0.0;
};

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> euler_to_rotation(Scalar theta, Scalar gamma, Scalar beta) {
  using std::cos;
  using std::sin;
  const Scalar ct = cos(theta), st = sin(theta);
  const Scalar cb = cos(beta), sb = sin(beta);
  const Scalar cg = cos(gamma), sg = sin(gamma);
  Eigen::Matrix<Scalar, 3, 3> R;
  R << ct * cb, ct * sb * sg - st * cg, ct * sb * cg + st * sg,
       st * cb, st * sb * sg + ct * cg, st * sb * cg - ct * sg,
       -sb, cb * sg, cb * cg;
  return R;
}

/// Inverse of euler_to_rotation. Throws GimbalDegenerate when |cos(beta)|
/// falls below `tolerance`.
template <typename Scalar>
EulerAngles rotation_to_euler(const Eigen::Matrix<Scalar, 3, 3>& R, Scalar tolerance = Scalar(1e-9)) {
  using std::atan2;
  using std::sqrt;
  const Scalar cos_beta = sqrt(R(0, 0) * R(0, 0) + R(1, 0) * R(1, 0));
  if (cos_beta < tolerance) {
    throw Error(ErrorCode::GimbalDegenerate, "beta at +-pi/2, theta and gamma not separable");
  }
  EulerAngles out;
  out.theta = static_cast<double>(atan2(R(1, 0), R(0, 0)));
  out.beta = static_cast<double>(atan2(-R(2, 0), cos_beta));
  out.gamma = static_cast<double>(atan2(R(2, 1), R(2, 2)));
  return out;
}

/// Translation-only canonicalization into the region frame.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 3, Eigen::Dynamic> to_local_frame(
    const Eigen::MatrixBase<Derived>& points, const RegionFrame& frame) {
  using Scalar = typename Derived::Scalar;
  return points.colwise() - frame.center.template cast<Scalar>();
}

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 3, Eigen::Dynamic> to_camera_frame(
    const Eigen::MatrixBase<Derived>& points, const RegionFrame& frame) {
  using Scalar = typename Derived::Scalar;
  return points.colwise() + frame.center.template cast<Scalar>();
}

Grasp compose_final_grasp(const RegionalGrasp& gp, const RegionFrame& frame, double score = 0.0);

/// Geodesic angle of R1^T R2, in [0, pi].
double rotation_distance(const Mat3& R1, const Mat3& R2);

/// Gripper rotation from a closing axis and an approach direction. The pair
/// is canonicalized so that the resulting Euler angles stay inside
/// [-pi/2, pi/2]: the closing axis is flipped to non-negative camera x.
/// Returns nullopt when the approach points toward the camera (z < 0) or the
/// axes are not orthogonal.
std::optional<Mat3> gripper_rotation(const Vec3& closing_axis, const Vec3& approach);

bool angles_in_range(double theta, double gamma, double beta);

void to_json(nlohmann::json& j, const Grasp& g);
void from_json(const nlohmann::json& j, Grasp& g);

}  // namespace flexlog
