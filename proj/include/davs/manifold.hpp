#pragma once

// Dynamic active vision space construction: project raw structure-of-interest
// keypoints through a middle sphere onto the camera action sphere, take the
// spherical hull loop, find the loop's Karcher centroid, locate the two
// boundary points whose connecting geodesic crosses the camera-centroid
// geodesic perpendicularly, and enclose the space with three geodesic paths.
// A tangent frame at the camera exposes the omega-parameterized sampling cone.

#include <cstdint>
#include <vector>

#include "davs/geometry.hpp"
#include "davs/karcher.hpp"

namespace davs {

struct SoiKeypointSet {
  std::vector<Vec3> keypoints;  // world positions, meters
  std::int64_t timestamp = 0;   // step index

  // N >= 3 distinct after merge, none at the chart center.
  void validate(const SphereChart& chart) const;
};

struct SoiPolygon {
  double middle_radius = 0.0;          // r* = max |X_i - V0|
  std::vector<Vec3> middle_points;     // hull vertices on the middle sphere
  std::vector<SpherePoint> chart_points;  // ray-traced onto the camera chart
};

struct DavsManifold {
  SpherePoint camera;    // P0
  SpherePoint centroid;  // O0, Karcher mean of the polygon vertices
  SpherePoint p1;        // boundary point left of the oriented P0->O0 geodesic
  SpherePoint p2;        // boundary point right of it
  GeodesicPath path_p0_p1;
  GeodesicPath path_p1_p2;
  GeodesicPath path_p2_p0;
  std::vector<GeodesicPath> refined_boundary;  // closed loop of dM'
  SoiPolygon polygon;
  bool clipped = false;  // some boundary sample fell below the hemisphere
};

struct TangentFrame {
  SpherePoint base;   // P0
  TangentVector v0;   // unit, toward O0
  TangentVector v1;   // unit, toward P1
  TangentVector v2;   // unit, toward P2
  double theta1 = 0;  // angle(v1, v0)
  double theta2 = 0;  // angle(v2, v0)
};

struct DavsConfig {
  // Boundary discretization, relative to the chart radius. Chosen so that
  // the sagitta of one sample segment stays below 1e-6 * r.
  double max_spacing_rel = 0.002;
  double karcher_tol = 1e-9;  // radians
  int karcher_max_iter = 100;
};

// Eq-style middle-sphere projection + spherical hull + ray trace to the
// camera chart. Loop order is CCW seen from outside.
SoiPolygon build_soi_polygon(const SoiKeypointSet& kps,
                             const SphereChart& chart);

// n geodesic paths X'_i -> X'_{i+1} (cyclic).
std::vector<GeodesicPath> build_refined_manifold(const SoiPolygon& poly,
                                                 double max_spacing);

// Intersections of the great circle through o0 perpendicular to the P0->O0
// geodesic with the boundary loop. first = left of the oriented geodesic,
// second = right.
std::pair<SpherePoint, SpherePoint> find_perpendicular_points(
    const std::vector<GeodesicPath>& boundary, const SpherePoint& p0,
    const SpherePoint& o0);

// Full construction. Deterministic: identical inputs give a bit-identical
// manifold.
DavsManifold build_davs(const SoiKeypointSet& kps, const SpherePoint& p0,
                        const SphereChart& chart, const DavsConfig& cfg = {});

TangentFrame tangent_frame(const DavsManifold& m);

// Unit tangent at angle theta2*(1-omega) + u * (theta2 + theta1*omega -
// theta2*(1-omega)) measured from v2 toward v1. omega = 0 collapses to v0.
TangentVector sample_direction(const TangentFrame& frame, double omega,
                               double u);

// Angular sampling interval [lo, hi] measured from v2, for replay checks.
std::pair<double, double> sampling_interval(const TangentFrame& frame,
                                            double omega);

// Signed angle of a unit tangent at frame.base measured from v2 toward v1
// (same convention as sample_direction).
double cone_angle_of(const TangentFrame& frame, const Vec3& unit_tangent);

// Checks every DavsManifold invariant (boundary closure, P1/P2 on dM',
// perpendicularity at the crossing, centroid containment); throws on
// violation. Used by the JSON validator and the acceptance suite.
void validate_manifold(const DavsManifold& m);

}  // namespace davs
