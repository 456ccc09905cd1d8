#include "flexlog/primitives.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace flexlog {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Roots of a t^2 + b t + c = 0 with a > 0, ascending.
std::optional<std::pair<double, double>> solve_quadratic(double a, double b, double c) {
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return std::nullopt;
  const double s = std::sqrt(disc);
  const double q = b >= 0.0 ? -0.5 * (b + s) : -0.5 * (b - s);
  double t1 = q / a;
  double t2 = q != 0.0 ? c / q : t1;
  if (t1 > t2) std::swap(t1, t2);
  return std::make_pair(t1, t2);
}

bool clip_slab(double o, double d, double h, double& tin, double& tout) {
  if (std::abs(d) < 1e-15) return std::abs(o) <= h;
  double t1 = (-h - o) / d;
  double t2 = (h - o) / d;
  if (t1 > t2) std::swap(t1, t2);
  tin = std::max(tin, t1);
  tout = std::min(tout, t2);
  return tin <= tout;
}

}  // namespace

std::string to_string(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::Box: return "box";
    case PrimitiveKind::Cylinder: return "cylinder";
    case PrimitiveKind::Sphere: return "sphere";
  }
  return "box";
}

PrimitiveKind primitive_kind_from_string(const std::string& name) {
  if (name == "box") return PrimitiveKind::Box;
  if (name == "cylinder") return PrimitiveKind::Cylinder;
  if (name == "sphere") return PrimitiveKind::Sphere;
  throw Error(ErrorCode::InvalidArgument, "unknown primitive kind '" + name + "'");
}

double Primitive::bounding_radius() const {
  switch (kind) {
    case PrimitiveKind::Box: return half_extents.norm();
    case PrimitiveKind::Cylinder: return std::hypot(radius(), half_extents.z());
    case PrimitiveKind::Sphere: return radius();
  }
  return half_extents.norm();
}

bool Primitive::contains(const Vec3& p, double tol) const {
  const Vec3 q = rotation.transpose() * (p - center);
  switch (kind) {
    case PrimitiveKind::Box: return (q.cwiseAbs() - half_extents).maxCoeff() <= tol;
    case PrimitiveKind::Cylinder:
      return q.head<2>().norm() <= radius() + tol && std::abs(q.z()) <= half_extents.z() + tol;
    case PrimitiveKind::Sphere: return q.norm() <= radius() + tol;
  }
  return false;
}

std::optional<std::pair<double, double>> Primitive::clip(const Vec3& o, const Vec3& d) const {
  const Vec3 lo = rotation.transpose() * (o - center);
  const Vec3 ld = rotation.transpose() * d;
  double tin = -kInf, tout = kInf;
  switch (kind) {
    case PrimitiveKind::Box:
      for (int i = 0; i < 3; ++i) {
        if (!clip_slab(lo[i], ld[i], half_extents[i], tin, tout)) return std::nullopt;
      }
      break;
    case PrimitiveKind::Cylinder: {
      const double a = ld.x() * ld.x() + ld.y() * ld.y();
      const double c = lo.x() * lo.x() + lo.y() * lo.y() - radius() * radius();
      if (a < 1e-15) {
        if (c > 0.0) return std::nullopt;
      } else {
        const auto roots = solve_quadratic(a, 2.0 * (lo.x() * ld.x() + lo.y() * ld.y()), c);
        if (!roots) return std::nullopt;
        tin = roots->first;
        tout = roots->second;
      }
      if (!clip_slab(lo.z(), ld.z(), half_extents.z(), tin, tout)) return std::nullopt;
      break;
    }
    case PrimitiveKind::Sphere: {
      const auto roots = solve_quadratic(ld.squaredNorm(), 2.0 * lo.dot(ld), lo.squaredNorm() - radius() * radius());
      if (!roots) return std::nullopt;
      tin = roots->first;
      tout = roots->second;
      break;
    }
  }
  return std::make_pair(tin, tout);
}

Vec3 Primitive::normal_at(const Vec3& p) const {
  const Vec3 q = rotation.transpose() * (p - center);
  Vec3 n = Vec3::Zero();
  switch (kind) {
    case PrimitiveKind::Box: {
      Eigen::Index axis = 0;
      (q.cwiseAbs().cwiseQuotient(half_extents)).maxCoeff(&axis);
      n[axis] = q[axis] >= 0.0 ? 1.0 : -1.0;
      break;
    }
    case PrimitiveKind::Cylinder: {
      const double rho = q.head<2>().norm();
      const double side_gap = std::abs(rho - radius());
      const double cap_gap = std::abs(std::abs(q.z()) - half_extents.z());
      if (side_gap <= cap_gap && rho > 0.0) {
        n << q.x() / rho, q.y() / rho, 0.0;
      } else {
        n.z() = q.z() >= 0.0 ? 1.0 : -1.0;
      }
      break;
    }
    case PrimitiveKind::Sphere: n = q.normalized(); break;
  }
  return rotation * n;
}

double Primitive::surface_area() const {
  const double pi = std::numbers::pi;
  switch (kind) {
    case PrimitiveKind::Box: {
      const Vec3 e = 2.0 * half_extents;
      return 2.0 * (e.x() * e.y() + e.y() * e.z() + e.x() * e.z());
    }
    case PrimitiveKind::Cylinder:
      return 2.0 * pi * radius() * 2.0 * half_extents.z() + 2.0 * pi * radius() * radius();
    case PrimitiveKind::Sphere: return 4.0 * pi * radius() * radius();
  }
  return 0.0;
}

void to_json(nlohmann::json& j, const Primitive& p) {
  std::vector<double> rot(9);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) rot[3 * r + c] = p.rotation(r, c);
  j = nlohmann::json{{"id", p.id},
                     {"kind", to_string(p.kind)},
                     {"center", {p.center.x(), p.center.y(), p.center.z()}},
                     {"rotation", rot},
                     {"half_extents", {p.half_extents.x(), p.half_extents.y(), p.half_extents.z()}}};
}

void from_json(const nlohmann::json& j, Primitive& p) {
  p.id = j.at("id").get<int>();
  p.kind = primitive_kind_from_string(j.at("kind").get<std::string>());
  const auto c = j.at("center").get<std::vector<double>>();
  const auto r = j.at("rotation").get<std::vector<double>>();
  const auto h = j.at("half_extents").get<std::vector<double>>();
  if (c.size() != 3 || r.size() != 9 || h.size() != 3) {
    throw Error(ErrorCode::InvalidArgument, "malformed primitive record");
  }
  p.center = Vec3(c[0], c[1], c[2]);
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) p.rotation(row, col) = r[3 * row + col];
  p.half_extents = Vec3(h[0], h[1], h[2]);
}

SurfaceSamples sample_surface(const Primitive& prim, int count, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(prim.id), 0x5u));
  SurfaceSamples out;
  out.points.resize(3, count);
  out.normals.resize(3, count);
  const double pi = std::numbers::pi;
  const Vec3 h = prim.half_extents;

  for (int i = 0; i < count; ++i) {
    Vec3 q, n;
    switch (prim.kind) {
      case PrimitiveKind::Box: {
        const double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
        const double pick = uniform01(rng) * (areas[0] + areas[1] + areas[2]);
        const int axis = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
        const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
        for (int k = 0; k < 3; ++k) q[k] = uniform(rng, -h[k], h[k]);
        q[axis] = sign * h[axis];
        n = Vec3::Zero();
        n[axis] = sign;
        break;
      }
      case PrimitiveKind::Cylinder: {
        const double r = h.x();
        const double side = 2.0 * pi * r * 2.0 * h.z();
        const double caps = 2.0 * pi * r * r;
        const double phi = uniform(rng, 0.0, 2.0 * pi);
        if (uniform01(rng) * (side + caps) < side) {
          q << r * std::cos(phi), r * std::sin(phi), uniform(rng, -h.z(), h.z());
          n << std::cos(phi), std::sin(phi), 0.0;
        } else {
          const double rho = r * std::sqrt(uniform01(rng));
          const double sign = uniform01(rng) < 0.5 ? -1.0 : 1.0;
          q << rho * std::cos(phi), rho * std::sin(phi), sign * h.z();
          n << 0.0, 0.0, sign;
        }
        break;
      }
      case PrimitiveKind::Sphere: {
        const double z = uniform(rng, -1.0, 1.0);
        const double phi = uniform(rng, 0.0, 2.0 * pi);
        const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
        n << s * std::cos(phi), s * std::sin(phi), z;
        n.normalize();
        q = h.x() * n;
        break;
      }
    }
    out.points.col(i) = prim.center + prim.rotation * q;
    out.normals.col(i) = prim.rotation * n;
  }
  return out;
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

int uniform_int(std::mt19937_64& rng, int n) {
  return static_cast<int>(uniform01(rng) * n) % std::max(n, 1);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
}

}  // namespace flexlog
