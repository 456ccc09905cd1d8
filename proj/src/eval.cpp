#include "flexlog/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace flexlog {

EvalObject make_eval_object(const Primitive& prim, int samples, std::uint64_t seed) {
  SurfaceSamples s = sample_surface(prim, samples, seed);
  EvalObject obj;
  obj.object_id = prim.id;
  obj.points = std::move(s.points);
  obj.normals = std::move(s.normals);
  obj.bound_center = prim.center;
  obj.bound_radius = prim.bounding_radius();
  obj.shape = prim;
  return obj;
}

std::vector<EvalObject> make_eval_objects(const std::vector<Primitive>& prims, int samples, std::uint64_t seed) {
  std::vector<EvalObject> out;
  out.reserve(prims.size());
  for (const auto& p : prims) out.push_back(make_eval_object(p, samples, seed));
  return out;
}

void FrictionGrades::validate() const {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "friction grades empty");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] > 0.0) || (i > 0 && !(values[i] > values[i - 1]))) {
      throw Error(ErrorCode::InvalidArgument, "friction grades must be positive and strictly ascending");
    }
  }
}

std::optional<ContactPair> find_contacts(const Grasp& grasp, const std::vector<EvalObject>& objects,
                                         const FingerModel& fingers) {
  const Mat3 R = grasp.rotation();
  const double half_w = grasp.width / 2.0 + fingers.contact_tolerance;
  const double half_t = fingers.thickness / 2.0;
  const double half_d = fingers.depth / 2.0;
  const double reach = std::sqrt(half_w * half_w + half_t * half_t + half_d * half_d);

  struct Hit {
    int object = -1;
    int index = -1;
    Vec3 q;
  };
  std::vector<Hit> pos, neg;
  for (std::size_t o = 0; o < objects.size(); ++o) {
    const EvalObject& obj = objects[o];
    if ((obj.bound_center - grasp.t).norm() > reach + obj.bound_radius) continue;
    const Eigen::Matrix3Xd local = R.transpose() * (obj.points.colwise() - grasp.t);
    for (int i = 0; i < local.cols(); ++i) {
      const Vec3 q = local.col(i);
      if (std::abs(q.x()) > half_w || std::abs(q.y()) > half_t || std::abs(q.z()) > half_d) continue;
      (q.x() >= 0.0 ? pos : neg).push_back({static_cast<int>(o), i, q});
    }
  }
  if (pos.empty() || neg.empty()) return std::nullopt;

  // Among the points reached first (within tolerance), prefer the one
  // closest to the closing line.
  auto pick = [&](const std::vector<Hit>& hits, double sign) {
    double front = -std::numeric_limits<double>::infinity();
    for (const auto& h : hits) front = std::max(front, sign * h.q.x());
    const Hit* best = nullptr;
    double best_off = 0.0;
    for (const auto& h : hits) {
      if (sign * h.q.x() < front - fingers.contact_tolerance) continue;
      const double off = h.q.y() * h.q.y() + h.q.z() * h.q.z();
      if (!best || off < best_off) {
        best = &h;
        best_off = off;
      }
    }
    return *best;
  };
  const Hit a = pick(pos, 1.0);
  const Hit b = pick(neg, -1.0);
  if (objects[a.object].object_id != objects[b.object].object_id) return std::nullopt;

  ContactPair c;
  c.object_id = objects[a.object].object_id;
  c.p1 = objects[a.object].points.col(a.index);
  c.n1 = objects[a.object].normals.col(a.index);
  c.p2 = objects[b.object].points.col(b.index);
  c.n2 = objects[b.object].normals.col(b.index);
  c.travel1 = grasp.width / 2.0 - a.q.x();
  c.travel2 = grasp.width / 2.0 + b.q.x();
  return c;
}

bool force_closure(const ContactPair& contacts, double mu) {
  const Vec3 line = contacts.p1 - contacts.p2;
  const double len = line.norm();
  if (!(len > 0.0)) return false;
  const Vec3 axis = line / len;
  const double cone = std::atan(mu);
  auto inside = [&](const Vec3& n) {
    const double c = std::clamp(std::abs(n.normalized().dot(axis)), 0.0, 1.0);
    return std::acos(c) <= cone;
  };
  return inside(contacts.n1) && inside(contacts.n2);
}

std::optional<double> min_friction_grade(const ContactPair& contacts, const FrictionGrades& grades) {
  for (double mu : grades.values) {
    if (force_closure(contacts, mu)) return mu;
  }
  return std::nullopt;
}

APReport ap_from_success(const std::vector<std::vector<bool>>& success, int k_max, const FrictionGrades& grades) {
  if (k_max < 1) throw Error(ErrorCode::InvalidArgument, "k_max must be >= 1");
  grades.validate();
  APReport report;
  report.grades = grades.values;
  report.evaluated = static_cast<int>(std::min<std::size_t>(success.size(), k_max));
  for (std::size_t g = 0; g < grades.values.size(); ++g) {
    double hits = 0.0, sum = 0.0;
    for (int k = 1; k <= k_max; ++k) {
      if (k <= report.evaluated && success[k - 1][g]) hits += 1.0;
      sum += hits / k;
    }
    report.per_grade.push_back(sum / k_max);
  }
  double total = 0.0;
  for (double v : report.per_grade) total += v;
  report.ap = total / static_cast<double>(report.per_grade.size());
  return report;
}

namespace {

std::vector<std::vector<bool>> grade_detections(const std::vector<Grasp>& detections,
                                                const std::vector<EvalObject>& objects, int k_max,
                                                const FrictionGrades& grades, const FingerModel& fingers,
                                                std::optional<int> target) {
  std::vector<std::vector<bool>> success;
  const std::size_t n = std::min<std::size_t>(detections.size(), k_max);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<bool> row(grades.values.size(), false);
    const auto contacts = find_contacts(detections[i], objects, fingers);
    if (contacts && (!target || contacts->object_id == *target)) {
      for (std::size_t g = 0; g < grades.values.size(); ++g) row[g] = force_closure(*contacts, grades.values[g]);
    }
    success.push_back(std::move(row));
  }
  return success;
}

}  // namespace

APReport average_precision(const std::vector<Grasp>& detections, const std::vector<EvalObject>& objects,
                           int k_max, const FrictionGrades& grades, const FingerModel& fingers) {
  return ap_from_success(grade_detections(detections, objects, k_max, grades, fingers, std::nullopt), k_max,
                         grades);
}

APReport target_oriented_ap(const std::vector<Grasp>& detections, const std::vector<EvalObject>& objects,
                            int target_id, int k_max, double tau_target, const FrictionGrades& grades,
                            const FingerModel& fingers) {
  const auto it = std::find_if(objects.begin(), objects.end(),
                               [&](const EvalObject& o) { return o.object_id == target_id; });
  if (it == objects.end()) throw Error(ErrorCode::UnknownTarget, "no object with id " + std::to_string(target_id));
  const double tau2 = tau_target * tau_target;
  std::vector<Grasp> on_target;
  for (const auto& g : detections) {
    const bool inside = it->shape && it->shape->contains(g.t);
    if (inside || (it->points.colwise() - g.t).colwise().squaredNorm().minCoeff() <= tau2) on_target.push_back(g);
  }
  return ap_from_success(grade_detections(on_target, objects, k_max, grades, fingers, target_id), k_max, grades);
}

}  // namespace flexlog
