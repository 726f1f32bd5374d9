#include "davs/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace davs {

void SoiKeypointSet::validate(const SphereChart& chart) const {
  if (keypoints.size() < 3) {
    throw Error(Errc::insufficient_points, "SOI needs at least 3 keypoints");
  }
  for (const Vec3& x : keypoints) {
    if ((x - chart.center()).norm() < 1e-12) {
      throw Error(Errc::undefined_direction,
                  "keypoint coincides with the viewpoint centroid");
    }
  }
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    bool dup = false;
    for (std::size_t j = 0; j < i; ++j) {
      if ((keypoints[i] - keypoints[j]).norm() <= 1e-9) {
        dup = true;
        break;
      }
    }
    if (!dup) ++distinct;
  }
  if (distinct < 3) {
    throw Error(Errc::insufficient_points,
                "fewer than 3 distinct keypoints after merging");
  }
}

SoiPolygon build_soi_polygon(const SoiKeypointSet& kps,
                             const SphereChart& chart) {
  kps.validate(chart);

  double r_star = 0.0;
  for (const Vec3& x : kps.keypoints) {
    r_star = std::max(r_star, (x - chart.center()).norm());
  }
  const SphereChart middle(chart.center(), r_star, false);

  std::vector<SpherePoint> projected;
  projected.reserve(kps.keypoints.size());
  for (const Vec3& x : kps.keypoints) projected.push_back(middle.project(x));

  std::vector<std::size_t> loop;
  try {
    loop = spherical_convex_hull(projected);
  } catch (const Error& e) {
    if (e.code() == Errc::insufficient_points) {
      // Distinct keypoints along shared rays collapse on the middle sphere.
      throw Error(Errc::degenerate_hull,
                  "keypoints project to fewer than 3 distinct directions");
    }
    throw;
  }

  SoiPolygon poly;
  poly.middle_radius = r_star;
  poly.middle_points.reserve(loop.size());
  poly.chart_points.reserve(loop.size());
  for (std::size_t idx : loop) {
    poly.middle_points.push_back(projected[idx].position());
    poly.chart_points.push_back(chart.project(projected[idx].position()));
  }
  return poly;
}

std::vector<GeodesicPath> build_refined_manifold(const SoiPolygon& poly,
                                                 double max_spacing) {
  if (poly.chart_points.size() < 3) {
    throw Error(Errc::degenerate_hull, "polygon has fewer than 3 vertices");
  }
  std::vector<GeodesicPath> boundary;
  boundary.reserve(poly.chart_points.size());
  const std::size_t n = poly.chart_points.size();
  for (std::size_t i = 0; i < n; ++i) {
    boundary.push_back(geodesic_path(poly.chart_points[i],
                                     poly.chart_points[(i + 1) % n],
                                     max_spacing));
  }
  return boundary;
}

namespace {

// Cyclic sample sequence of the boundary loop (shared endpoints dropped).
std::vector<SpherePoint> flatten_boundary(
    const std::vector<GeodesicPath>& boundary) {
  std::vector<SpherePoint> seq;
  for (const GeodesicPath& path : boundary) {
    const auto& s = path.samples();
    for (std::size_t i = 0; i + 1 < s.size(); ++i) seq.push_back(s[i]);
    if (s.size() == 1) seq.push_back(s[0]);
  }
  return seq;
}

// Exact intersection of the segment's great circle with the plane through the
// center with normal `plane_normal`, restricted to the arc [a, b].
std::optional<SpherePoint> arc_plane_intersection(const SpherePoint& a,
                                                  const SpherePoint& b,
                                                  const Vec3& plane_normal) {
  const SphereChart& chart = a.chart();
  const Vec3 au = a.unit();
  const Vec3 bu = b.unit();
  const Vec3 nb = au.cross(bu);
  const double nbn = nb.norm();
  if (nbn < 1e-15) {  // degenerate segment
    return std::nullopt;
  }
  Vec3 d = nb.cross(plane_normal);
  const double dn = d.norm();
  if (dn < 1e-15) {  // segment circle lies in the plane
    return std::nullopt;
  }
  d /= dn;
  for (const Vec3& cand : {d, Vec3(-d)}) {
    // On the arc iff between a and b going the short way around nb.
    if (au.cross(cand).dot(nb) >= -1e-12 * nbn &&
        cand.cross(bu).dot(nb) >= -1e-12 * nbn &&
        cand.dot(au + bu) > 0.0) {
      return chart.project(chart.center() + cand * chart.radius());
    }
  }
  return std::nullopt;
}

}  // namespace

std::pair<SpherePoint, SpherePoint> find_perpendicular_points(
    const std::vector<GeodesicPath>& boundary, const SpherePoint& p0,
    const SpherePoint& o0) {
  const SphereChart& chart = o0.chart();
  const double r = chart.radius();
  if (geodesic_distance(p0, o0) < 1e-12 * r) {
    throw Error(Errc::invalid_input, "camera coincides with the centroid");
  }

  // Tangent of the P0-O0 geodesic at O0; it is also the plane normal of the
  // great circle through O0 perpendicular to that geodesic.
  const TangentVector to_p0 = log_map(o0, p0);
  const Vec3 t_hat = to_p0.direction() / to_p0.norm();

  const std::vector<SpherePoint> seq = flatten_boundary(boundary);
  if (seq.size() < 3) {
    throw Error(Errc::malformed_boundary, "boundary has too few samples");
  }

  std::vector<SpherePoint> crossings;
  const Vec3& center = chart.center();
  double f_prev = (seq.front().position() - center).dot(t_hat);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const SpherePoint& a = seq[i];
    const SpherePoint& b = seq[(i + 1) % seq.size()];
    const double fa = f_prev;
    const double fb = (b.position() - center).dot(t_hat);
    const bool sa = fa >= 0.0;
    const bool sb = fb >= 0.0;
    if (sa != sb) {
      auto hit = arc_plane_intersection(a, b, t_hat);
      if (!hit) {
        // Fallback: chord interpolation projected back to the sphere; the
        // chord lies in the segment's great-circle plane, so the projection
        // stays on the boundary arc.
        const double t = fa / (fa - fb);
        hit = chart.project(a.position() + t * (b.position() - a.position()));
      }
      bool dup = false;
      for (const SpherePoint& c : crossings) {
        if ((c.position() - hit->position()).norm() < 1e-9 * r) {
          dup = true;
          break;
        }
      }
      if (!dup) crossings.push_back(*hit);
    }
    f_prev = fb;
  }

  if (crossings.size() != 2) {
    throw Error(Errc::malformed_boundary,
                "expected exactly 2 transversal boundary intersections, got " +
                    std::to_string(crossings.size()));
  }

  // Left of the oriented geodesic P0 -> O0: travel direction at O0 is -t_hat.
  const Vec3 left = o0.unit().cross(-t_hat);
  const double s0 = log_map(o0, crossings[0]).direction().dot(left);
  const double s1 = log_map(o0, crossings[1]).direction().dot(left);
  if (s0 == s1 || (s0 > 0) == (s1 > 0)) {
    throw Error(Errc::malformed_boundary,
                "boundary intersections on the same side of the geodesic");
  }
  if (s0 > 0) return {crossings[0], crossings[1]};
  return {crossings[1], crossings[0]};
}

DavsManifold build_davs(const SoiKeypointSet& kps, const SpherePoint& p0,
                        const SphereChart& chart, const DavsConfig& cfg) {
  if (p0.chart() != chart) {
    throw Error(Errc::chart_mismatch, "camera point is not on the chart");
  }
  const double spacing = cfg.max_spacing_rel * chart.radius();

  SoiPolygon poly = build_soi_polygon(kps, chart);
  std::vector<GeodesicPath> boundary = build_refined_manifold(poly, spacing);

  const FrechetProblem prob(poly.chart_points);
  const SpherePoint o0 =
      karcher_mean(prob, cfg.karcher_tol, cfg.karcher_max_iter);

  std::vector<Vec3> loop_units;
  loop_units.reserve(poly.chart_points.size());
  for (const SpherePoint& v : poly.chart_points) loop_units.push_back(v.unit());
  if (!inside_convex_loop(loop_units, o0.unit(), 1e-9)) {
    throw Error(Errc::malformed_boundary,
                "Karcher centroid fell outside the SOI polygon");
  }

  auto [p1, p2] = find_perpendicular_points(boundary, p0, o0);

  DavsManifold m{p0,
                 o0,
                 p1,
                 p2,
                 geodesic_path(p0, p1, spacing),
                 geodesic_path(p1, p2, spacing),
                 geodesic_path(p2, p0, spacing),
                 std::move(boundary),
                 std::move(poly),
                 false};

  if (chart.hemisphere()) {
    const double tol = kRadiusTol * chart.radius();
    for (const GeodesicPath* path :
         {&m.path_p0_p1, &m.path_p1_p2, &m.path_p2_p0}) {
      for (const SpherePoint& s : path->samples()) {
        if (s.position().z() < chart.center().z() - tol) {
          m.clipped = true;
          break;
        }
      }
      if (m.clipped) break;
    }
  }
  return m;
}

namespace {

double principal_angle(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

}  // namespace

TangentFrame tangent_frame(const DavsManifold& m) {
  const double r = m.camera.chart().radius();
  const double tol = 1e-9 * r;
  for (const SpherePoint* q : {&m.centroid, &m.p1, &m.p2}) {
    if (geodesic_distance(m.camera, *q) < tol) {
      throw Error(Errc::degenerate_frame,
                  "camera coincides with a manifold vertex");
    }
  }
  const Vec3 nu = m.camera.unit();
  const auto unit_log = [&](const SpherePoint& q) {
    TangentVector v = log_map(m.camera, q);
    // Normalizing a short log vector amplifies radial roundoff; re-project.
    Vec3 dir = v.direction() / v.norm();
    dir -= dir.dot(nu) * nu;
    return TangentVector(m.camera, dir.normalized());
  };
  TangentVector v0 = unit_log(m.centroid);
  TangentVector v1 = unit_log(m.p1);
  TangentVector v2 = unit_log(m.p2);

  const double theta1 = principal_angle(v1.direction(), v0.direction());
  const double theta2 = principal_angle(v2.direction(), v0.direction());

  // v1 and v2 must straddle v0 for the cone parameterization to close.
  const Vec3 j0 = m.camera.unit().cross(v0.direction());
  const double side1 = v1.direction().dot(j0);
  const double side2 = v2.direction().dot(j0);
  if (side1 * side2 > 1e-9) {
    throw Error(Errc::degenerate_frame,
                "boundary tangents lie on one side of the centroid tangent");
  }

  return TangentFrame{m.camera, std::move(v0), std::move(v1), std::move(v2),
                      theta1, theta2};
}

std::pair<double, double> sampling_interval(const TangentFrame& frame,
                                            double omega) {
  const double lo = frame.theta2 * (1.0 - omega);
  const double hi = frame.theta2 + frame.theta1 * omega;
  return {lo, hi};
}

namespace {

// Rotation sense from v2 toward v0 (and on toward v1) in the tangent plane.
// Returns the in-plane axis j2 = sigma * (n x v2).
Vec3 cone_axis(const TangentFrame& frame) {
  const Vec3 n = frame.base.unit();
  Vec3 j2 = n.cross(frame.v2.direction());
  double s = frame.v0.direction().dot(j2);
  if (std::abs(s) < 1e-12) s = frame.v1.direction().dot(j2);
  if (s < 0.0) j2 = -j2;
  return j2;
}

}  // namespace

TangentVector sample_direction(const TangentFrame& frame, double omega,
                               double u) {
  if (omega < 0.0 || omega > 1.0 || u < 0.0 || u > 1.0) {
    throw Error(Errc::invalid_input, "omega and u must lie in [0, 1]");
  }
  const auto [lo, hi] = sampling_interval(frame, omega);
  const double alpha = lo + u * (hi - lo);
  const Vec3 j2 = cone_axis(frame);
  const Vec3 dir =
      std::cos(alpha) * frame.v2.direction() + std::sin(alpha) * j2;
  return TangentVector(frame.base, dir);
}

double cone_angle_of(const TangentFrame& frame, const Vec3& unit_tangent) {
  const Vec3 j2 = cone_axis(frame);
  double alpha = std::atan2(unit_tangent.dot(j2),
                            unit_tangent.dot(frame.v2.direction()));
  if (alpha < 0.0) alpha += 2.0 * M_PI;
  return alpha;
}

namespace {

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

double min_distance_to_boundary(const std::vector<GeodesicPath>& boundary,
                                const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (const GeodesicPath& path : boundary) {
    const auto& s = path.samples();
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      best = std::min(best,
                      point_segment_distance(p, s[i].position(),
                                             s[i + 1].position()));
    }
  }
  return best;
}

void require(bool cond, const std::string& what) {
  if (!cond) throw Error(Errc::malformed_boundary, what);
}

}  // namespace

void validate_manifold(const DavsManifold& m) {
  const SphereChart& chart = m.camera.chart();
  const double r = chart.radius();
  const double tol = 1e-9 * r;

  // Boundary closure: the three paths chain P0 -> P1 -> P2 -> P0.
  require((m.path_p0_p1.a().position() - m.camera.position()).norm() <= tol,
          "path P0P1 does not start at P0");
  require((m.path_p0_p1.b().position() - m.p1.position()).norm() <= tol,
          "path P0P1 does not end at P1");
  require((m.path_p1_p2.a().position() - m.p1.position()).norm() <= tol,
          "path P1P2 does not start at P1");
  require((m.path_p1_p2.b().position() - m.p2.position()).norm() <= tol,
          "path P1P2 does not end at P2");
  require((m.path_p2_p0.a().position() - m.p2.position()).norm() <= tol,
          "path P2P0 does not start at P2");
  require((m.path_p2_p0.b().position() - m.camera.position()).norm() <= tol,
          "path P2P0 does not end at P0");

  // Refined boundary closes cyclically.
  const std::size_t nb = m.refined_boundary.size();
  require(nb >= 3, "refined boundary needs >= 3 paths");
  for (std::size_t i = 0; i < nb; ++i) {
    const auto& cur = m.refined_boundary[i];
    const auto& nxt = m.refined_boundary[(i + 1) % nb];
    require((cur.b().position() - nxt.a().position()).norm() <= tol,
            "refined boundary is not a closed loop");
  }

  // Every sample lies on the chart sphere.
  const auto check_samples = [&](const GeodesicPath& path) {
    for (const SpherePoint& s : path.samples()) {
      require(chart.on_sphere(s.position()), "path sample off the sphere");
    }
  };
  for (const auto& path : m.refined_boundary) check_samples(path);
  check_samples(m.path_p0_p1);
  check_samples(m.path_p1_p2);
  check_samples(m.path_p2_p0);

  // P1, P2 on the refined boundary.
  require(min_distance_to_boundary(m.refined_boundary, m.p1.position()) <=
              1e-6 * r,
          "P1 is not on the refined boundary");
  require(min_distance_to_boundary(m.refined_boundary, m.p2.position()) <=
              1e-6 * r,
          "P2 is not on the refined boundary");

  // Perpendicularity at the crossing point O0.
  const TangentVector t0 = log_map(m.centroid, m.camera);
  const TangentVector w1 = log_map(m.centroid, m.p1);
  const TangentVector w2 = log_map(m.centroid, m.p2);
  require(t0.norm() > 0 && w1.norm() > 0 && w2.norm() > 0,
          "degenerate vertex configuration");
  const Vec3 t0u = t0.direction() / t0.norm();
  require(std::abs((w1.direction() / w1.norm()).dot(t0u)) <= 1e-6,
          "P1 geodesic is not perpendicular at O0");
  require(std::abs((w2.direction() / w2.norm()).dot(t0u)) <= 1e-6,
          "P2 geodesic is not perpendicular at O0");

  // Centroid inside the SOI polygon.
  std::vector<Vec3> loop_units;
  loop_units.reserve(m.polygon.chart_points.size());
  for (const SpherePoint& v : m.polygon.chart_points) {
    loop_units.push_back(v.unit());
  }
  require(inside_convex_loop(loop_units, m.centroid.unit(), 1e-9),
          "centroid lies outside the SOI polygon");
}

}  // namespace davs
