#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"

#include "flexlog/geometry.hpp"

namespace flexlog {

enum class PrimitiveKind { Box, Cylinder, Sphere };

std::string to_string(PrimitiveKind kind);
PrimitiveKind primitive_kind_from_string(const std::string& name);

/// Analytic solid in the camera frame. `half_extents` holds (hx, hy, hz) for
/// a box, (r, r, half_height) for a cylinder along its local z, and (r, r, r)
/// for a sphere.
struct Primitive {
  int id = 0;
  PrimitiveKind kind = PrimitiveKind::Box;
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Vec3 half_extents = Vec3::Zero();

  double radius() const { return half_extents.x(); }
  double bounding_radius() const;
  bool contains(const Vec3& p, double tol = 1e-12) const;

  /// Parametric interval [t_in, t_out] where the line o + t d is inside the
  /// solid, or nullopt when it misses. `d` need not be unit length.
  std::optional<std::pair<double, double>> clip(const Vec3& o, const Vec3& d) const;

  /// Outward unit normal of the surface point nearest `p`.
  Vec3 normal_at(const Vec3& p) const;

  double surface_area() const;
};

void to_json(nlohmann::json& j, const Primitive& p);
void from_json(const nlohmann::json& j, Primitive& p);

struct SurfaceSamples {
  Eigen::Matrix3Xd points;
  Eigen::Matrix3Xd normals;
};

/// Deterministic area-uniform surface samples with analytic unit normals.
SurfaceSamples sample_surface(const Primitive& prim, int count, std::uint64_t seed);

/// Portable RNG helpers; the standard distributions are implementation
/// defined, these are not.
double uniform01(std::mt19937_64& rng);
double uniform(std::mt19937_64& rng, double lo, double hi);
int uniform_int(std::mt19937_64& rng, int n);  // [0, n)
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0);

}  // namespace flexlog
