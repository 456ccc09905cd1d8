#pragma once

#include <optional>
#include <vector>

#include "flexlog/geometry.hpp"
#include "flexlog/primitives.hpp"

namespace flexlog {

/// Object surface used for contact search: sampled points with unit normals.
struct EvalObject {
  int object_id = 0;
  Eigen::Matrix3Xd points;
  Eigen::Matrix3Xd normals;
  Vec3 bound_center = Vec3::Zero();
  double bound_radius = 0.0;
  std::optional<Primitive> shape;  // closed-form solid when known
};

inline constexpr int kDefaultSurfaceSamples = 2000;

EvalObject make_eval_object(const Primitive& prim, int samples = kDefaultSurfaceSamples, std::uint64_t seed = 0);
std::vector<EvalObject> make_eval_objects(const std::vector<Primitive>& prims,
                                          int samples = kDefaultSurfaceSamples, std::uint64_t seed = 0);

/// Ascending friction coefficients at which grasps are graded.
struct FrictionGrades {
  std::vector<double> values{0.2, 0.4, 0.6, 0.8, 1.0, 1.2};

  void validate() const;
};

/// Parallel-jaw finger geometry for the swept-slab contact search.
struct FingerModel {
  double depth = 0.02;      // extent along the approach axis
  double thickness = 0.01;  // extent along the gripper y axis
  double contact_tolerance = 0.001;
};

struct ContactPair {
  Vec3 p1 = Vec3::Zero();  // +x finger
  Vec3 n1 = Vec3::UnitX();
  Vec3 p2 = Vec3::Zero();  // -x finger
  Vec3 n2 = Vec3::UnitX();
  int object_id = 0;
  double travel1 = 0.0;
  double travel2 = 0.0;
};

/// Closes both fingers along the gripper x axis; nullopt when a side sweeps
/// no surface or the two contacts lie on different objects.
std::optional<ContactPair> find_contacts(const Grasp& grasp, const std::vector<EvalObject>& objects,
                                         const FingerModel& fingers = {});

/// Antipodal two-finger test: both normals within atan(mu) of the contact line.
bool force_closure(const ContactPair& contacts, double mu);

/// Smallest grade at which the pair is in force closure.
std::optional<double> min_friction_grade(const ContactPair& contacts, const FrictionGrades& grades);

struct APReport {
  double ap = 0.0;
  std::vector<double> grades;
  std::vector<double> per_grade;
  int evaluated = 0;  // detections considered (<= k_max)
};

/// success[rank][grade] -> AP with missing ranks (beyond success.size())
/// counted as failures.
APReport ap_from_success(const std::vector<std::vector<bool>>& success, int k_max, const FrictionGrades& grades);

/// Detections must be NMS'd and sorted by descending score.
APReport average_precision(const std::vector<Grasp>& detections, const std::vector<EvalObject>& objects,
                           int k_max = 50, const FrictionGrades& grades = {}, const FingerModel& fingers = {});

/// AP restricted to grasps whose centers lie inside the target or within
/// `tau_target` of its surface; success also needs both contacts on the
/// target.
APReport target_oriented_ap(const std::vector<Grasp>& detections, const std::vector<EvalObject>& objects,
                            int target_id, int k_max = 10, double tau_target = 0.01,
                            const FrictionGrades& grades = {}, const FingerModel& fingers = {});

}  // namespace flexlog
