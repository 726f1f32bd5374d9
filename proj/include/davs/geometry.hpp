#pragma once

// Exact primitives for a spherical camera action manifold: points, tangent
// vectors, geodesics, radial projections and spherical convex hulls.
//
// Conventions:
//   - A chart is a sphere S^2(r) centered at V0. Points are stored as world
//     positions; unit() gives (p - V0)/r.
//   - Geodesic distance between p, q is r * acos(<p_unit, q_unit>).
//   - Tangent vectors live in the plane orthogonal to (p - V0); their norm is
//     an arc length in world units, so exp_map travels |v| along the sphere.
//   - The hemisphere flag (z >= V0.z) is a property of the chart. Radius
//     membership is validated on every point; the hemisphere constraint is a
//     queryable predicate (in_hemisphere) enforced by consumers that need it
//     (camera poses, manifold clipping), since exp_map and projections of
//     arbitrary scene data may legitimately cross the horizon.

#include <Eigen/Dense>
#include <cstddef>
#include <optional>
#include <vector>

#include "davs/errors.hpp"

namespace davs {

using Vec3 = Eigen::Vector3d;

inline constexpr double kRadiusTol = 1e-9;      // relative, point-on-sphere
inline constexpr double kTangencyTol = 1e-9;    // relative, tangent-plane
inline constexpr double kAntipodalTol = 1e-9;   // radians away from pi
inline constexpr double kMergeTol = 1e-9;       // relative, duplicate merge

class SpherePoint;

class SphereChart {
 public:
  SphereChart(const Vec3& center, double radius, bool hemisphere = false);

  const Vec3& center() const { return center_; }
  double radius() const { return radius_; }
  bool hemisphere() const { return hemisphere_; }

  bool operator==(const SphereChart& other) const;
  bool operator!=(const SphereChart& other) const { return !(*this == other); }

  // Validated construction: position must lie on the sphere within
  // kRadiusTol * r.
  SpherePoint point(const Vec3& position) const;

  // Outward radial projection of any x != V0 onto this sphere.
  SpherePoint project(const Vec3& x) const;

  bool on_sphere(const Vec3& position) const;
  bool in_hemisphere(const Vec3& position) const;

 private:
  Vec3 center_;
  double radius_;
  bool hemisphere_;
};

class SpherePoint {
 public:
  const Vec3& position() const { return position_; }
  const SphereChart& chart() const { return chart_; }

  // (p - V0) / r
  Vec3 unit() const { return (position_ - chart_.center()) / chart_.radius(); }

  bool in_hemisphere() const { return chart_.in_hemisphere(position_); }

 private:
  friend class SphereChart;
  SpherePoint(const Vec3& position, const SphereChart& chart)
      : position_(position), chart_(chart) {}

  Vec3 position_;
  SphereChart chart_;
};

class TangentVector {
 public:
  // direction must be orthogonal to (base - V0) within kTangencyTol.
  TangentVector(const SpherePoint& base, const Vec3& direction);

  const SpherePoint& base() const { return base_; }
  const Vec3& direction() const { return direction_; }
  double norm() const { return direction_.norm(); }

 private:
  SpherePoint base_;
  Vec3 direction_;
};

class GeodesicPath {
 public:
  const SpherePoint& a() const { return a_; }
  const SpherePoint& b() const { return b_; }
  const std::vector<SpherePoint>& samples() const { return samples_; }
  double arc_length() const { return arc_length_; }

  // Rebuild a path from stored samples (JSON import). Endpoints are the
  // first/last samples; arc length is recomputed.
  static GeodesicPath from_samples(std::vector<SpherePoint> samples);

 private:
  friend GeodesicPath geodesic_path(const SpherePoint&, const SpherePoint&,
                                    double);
  GeodesicPath(SpherePoint a, SpherePoint b, std::vector<SpherePoint> samples,
               double arc_length)
      : a_(std::move(a)),
        b_(std::move(b)),
        samples_(std::move(samples)),
        arc_length_(arc_length) {}

  SpherePoint a_;
  SpherePoint b_;
  std::vector<SpherePoint> samples_;
  double arc_length_;
};

// r * acos of the clamped unit dot product. Throws chart_mismatch if the
// points disagree on chart.
double geodesic_distance(const SpherePoint& p, const SpherePoint& q);

// Great-circle travel from v.base along v.direction for arc length |v|.
// The zero vector returns the base point.
SpherePoint exp_map(const TangentVector& v);

// Inverse of exp_map: tangent at p with norm d(p, q) pointing toward q.
// Throws degenerate_log for antipodal inputs.
TangentVector log_map(const SpherePoint& p, const SpherePoint& q);

// Uniform arc-length subdivision with ceil(arc / max_spacing) + 1 samples.
// p == q yields a single-sample path of length zero.
GeodesicPath geodesic_path(const SpherePoint& p, const SpherePoint& q,
                           double max_spacing);

// Same as chart.project.
SpherePoint radial_project(const Vec3& x, const SphereChart& chart);

// Indices of the spherical convex hull of `points`, counterclockwise as seen
// from outside the sphere, starting at the smallest participating index.
// Duplicates (within kMergeTol * r) are merged to their first occurrence.
// Requires >= 3 distinct points confined to one open hemisphere.
std::vector<std::size_t> spherical_convex_hull(
    const std::vector<SpherePoint>& points);

// Unit tangent at `at` (an endpoint of the path) pointing along the path
// toward the far endpoint.
TangentVector tangent_of_path_at(const GeodesicPath& path,
                                 const SpherePoint& at);

// --- Helpers shared by the manifold and simulator layers ---

// An axis u with <u, x_i> > 0 for all unit directions x_i, when one exists.
// Deterministic: Euclidean-mean candidate refined by a perceptron sweep.
std::optional<Vec3> open_hemisphere_axis(const std::vector<Vec3>& units);

// True when q (unit) lies inside or on the convex CCW loop given by unit
// vertices. Edge test: <a x b, q> >= -tol for every directed edge (a, b).
bool inside_convex_loop(const std::vector<Vec3>& loop_units, const Vec3& q,
                        double tol = 1e-12);

// Deterministic unit vector orthogonal to u (|u| = 1).
Vec3 any_orthonormal(const Vec3& u);

}  // namespace davs
