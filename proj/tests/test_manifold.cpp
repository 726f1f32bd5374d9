#include <doctest.h>

#include <random>

#include "davs/manifold.hpp"
#include "oracles.hpp"

using namespace davs;

namespace {

const SphereChart chart(Vec3::Zero(), 1.0, false);

// Ring of keypoints in the plane with the given center, radius and normal.
std::vector<Vec3> keypoint_ring(const Vec3& center, double radius,
                                const Vec3& normal, int n,
                                double phase = 0.0) {
  const Vec3 nn = normal.normalized();
  const Vec3 e1 = any_orthonormal(nn);
  const Vec3 e2 = nn.cross(e1);
  std::vector<Vec3> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    const double a = phase + 2.0 * M_PI * i / n;
    out.push_back(center + radius * (std::cos(a) * e1 + std::sin(a) * e2));
  }
  return out;
}

SpherePoint cam_at(double colat, double lon) {
  return chart.point(Vec3(std::sin(colat) * std::cos(lon),
                          std::sin(colat) * std::sin(lon), std::cos(colat)));
}

}  // namespace

TEST_CASE("build_soi_polygon") {
  SUBCASE("three keypoints stay collinear with their rays") {
    SoiKeypointSet kps{{{0.2, 0.0, 0.5}, {-0.1, 0.2, 0.6}, {0.0, -0.2, 0.4}},
                       0};
    const SoiPolygon poly = build_soi_polygon(kps, chart);
    REQUIRE(poly.chart_points.size() == 3);
    CHECK(poly.middle_radius ==
          doctest::Approx(Vec3(-0.1, 0.2, 0.6).norm()).epsilon(1e-12));
    // Each projected vertex is a positive multiple of some raw keypoint.
    for (const SpherePoint& v : poly.chart_points) {
      bool matched = false;
      for (const Vec3& k : kps.keypoints) {
        if (v.unit().cross(k.normalized()).norm() < 1e-12 &&
            v.unit().dot(k.normalized()) > 0.0) {
          matched = true;
        }
      }
      CHECK(matched);
    }
  }
  SUBCASE("keypoints on a shared ray collapse to a degenerate hull") {
    SoiKeypointSet kps{{{0.1, 0.0, 0.5}, {0.2, 0.0, 1.0}, {0.3, 0.0, 1.5},
                       {-0.1, 0.1, 0.5}},
                      0};
    CHECK_THROWS_WITH_AS(build_soi_polygon(kps, chart),
                         doctest::Contains("distinct"), Error);
  }
  SUBCASE("noisy ring keeps the loop, drops interior outliers") {
    std::mt19937 rng(61);
    std::uniform_real_distribution<double> jitter(-0.01, 0.01);
    std::vector<Vec3> pts = keypoint_ring({0, 0, 0.7}, 0.25, {0, 0, 1}, 8);
    for (Vec3& p : pts) p += Vec3(jitter(rng), jitter(rng), jitter(rng));
    pts.push_back({0.02, 0.01, 0.69});   // interior
    pts.push_back({-0.01, 0.03, 0.71});  // interior
    const SoiPolygon poly = build_soi_polygon(SoiKeypointSet{pts, 3}, chart);
    CHECK(poly.chart_points.size() == 8);

    // Gnomonic oracle on the middle sphere agrees on the vertex set.
    const SphereChart middle(Vec3::Zero(), poly.middle_radius, false);
    std::vector<SpherePoint> projected;
    for (const Vec3& p : pts) projected.push_back(middle.project(p));
    const auto oracle = oracles::hull_oracle(projected, Vec3(0, 0, 1));
    CHECK(oracle.size() == 8);
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      CHECK((poly.middle_points[i] -
             projected[oracle[i]].position()).norm() < 1e-12);
    }
  }
  SUBCASE("fewer than three keypoints rejected") {
    SoiKeypointSet kps{{{0.1, 0.0, 0.5}, {0.2, 0.1, 0.5}}, 0};
    CHECK_THROWS_AS(build_soi_polygon(kps, chart), Error);
  }
}

TEST_CASE("build_refined_manifold") {
  SoiKeypointSet kps{{{0.25, 0.0, 0.6}, {-0.2, 0.22, 0.62}, {-0.05, -0.3, 0.55}},
                     0};
  const SoiPolygon poly = build_soi_polygon(kps, chart);
  const auto boundary = build_refined_manifold(poly, 0.02);
  SUBCASE("paths chain cyclically") {
    REQUIRE(boundary.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto& cur = boundary[i];
      const auto& nxt = boundary[(i + 1) % 3];
      CHECK((cur.b().position() - nxt.a().position()).norm() < 1e-12);
    }
  }
  SUBCASE("total length equals the sum of pairwise distances") {
    double total = 0.0;
    for (const auto& p : boundary) total += p.arc_length();
    double expect = 0.0;
    for (std::size_t i = 0; i < poly.chart_points.size(); ++i) {
      expect += geodesic_distance(
          poly.chart_points[i],
          poly.chart_points[(i + 1) % poly.chart_points.size()]);
    }
    CHECK(total == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("every sample is on the chart sphere") {
    for (const auto& p : boundary) {
      for (const SpherePoint& s : p.samples()) {
        CHECK(chart.on_sphere(s.position()));
      }
    }
  }
}

TEST_CASE("find_perpendicular_points") {
  SUBCASE("circular boundary with the camera on it") {
    // Cap circle of angular radius beta about +z; O0 is the cap center by
    // symmetry; expected intersections sit a quarter turn from P0.
    const double beta = 0.5;
    std::vector<Vec3> ring;
    const int n = 120;
    for (int i = 0; i < n; ++i) {
      const double a = 2.0 * M_PI * i / n;
      ring.push_back(Vec3(std::sin(beta) * std::cos(a),
                          std::sin(beta) * std::sin(a), std::cos(beta)));
    }
    SoiPolygon poly;
    poly.middle_radius = 1.0;
    for (const Vec3& u : ring) {
      poly.middle_points.push_back(u);
      poly.chart_points.push_back(chart.point(u));
    }
    const auto boundary = build_refined_manifold(poly, 0.01);
    const SpherePoint p0 = chart.point(
        Vec3(std::sin(beta), 0.0, std::cos(beta)));
    const SpherePoint o0 = chart.point(Vec3(0, 0, 1));
    const auto [p1, p2] = find_perpendicular_points(boundary, p0, o0);
    // Both lie on the perpendicular plane through O0 (x = 0 here).
    CHECK(std::abs(p1.position().x()) < 1e-9);
    CHECK(std::abs(p2.position().x()) < 1e-9);
    // Travel through O0 continues along -x; left of that heading is -y.
    CHECK(p1.position().y() == doctest::Approx(-std::sin(beta)).epsilon(2e-3));
    CHECK(p2.position().y() == doctest::Approx(std::sin(beta)).epsilon(2e-3));
    // Perpendicularity at O0 is built in.
    const Vec3 t0 = log_map(o0, p0).direction().normalized();
    const Vec3 w1 = log_map(o0, p1).direction().normalized();
    CHECK(std::abs(w1.dot(t0)) <= 1e-9);
  }
  SUBCASE("random convex loops") {
    std::mt19937 rng(67);
    for (int trial = 0; trial < 40; ++trial) {
      const Vec3 axis = oracles::random_unit(rng);
      std::vector<Vec3> raw;
      for (int i = 0; i < 10; ++i) {
        raw.push_back(oracles::random_in_cap(rng, axis, 0.45) * 0.8);
      }
      SoiPolygon poly;
      try {
        poly = build_soi_polygon(SoiKeypointSet{raw, 0}, chart);
      } catch (const Error&) {
        continue;  // degenerate draw
      }
      const auto boundary = build_refined_manifold(poly, 0.002);
      const SpherePoint o0 = karcher_mean(FrechetProblem(poly.chart_points));
      const SpherePoint p0 =
          chart.point(oracles::random_in_cap(rng, axis, 1.2));
      if (geodesic_distance(p0, o0) < 1e-3) continue;
      std::pair<SpherePoint, SpherePoint> pp = [&] {
        return find_perpendicular_points(boundary, p0, o0);
      }();

      // On the boundary within tolerance.
      for (const SpherePoint* p : {&pp.first, &pp.second}) {
        double best = 1e9;
        std::size_t best_edge = 0;
        for (std::size_t e = 0; e < boundary.size(); ++e) {
          const auto& s = boundary[e].samples();
          for (std::size_t k = 0; k + 1 < s.size(); ++k) {
            const Vec3 a = s[k].position();
            const Vec3 b = s[k + 1].position();
            const Vec3 ab = b - a;
            const double t = std::clamp(
                (p->position() - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
            best = std::min(best, (p->position() - (a + t * ab)).norm());
          }
          if (best < 1e-6) {
            best_edge = e;
            break;
          }
        }
        (void)best_edge;
        CHECK(best <= 1e-6);
      }

      // The two crossings land on different polygon edges, so both loop
      // arcs between them contain at least one original vertex.
      const auto edge_of = [&](const SpherePoint& p) {
        double best = 1e9;
        std::size_t arg = 0;
        for (std::size_t e = 0; e < boundary.size(); ++e) {
          const auto& s = boundary[e].samples();
          for (std::size_t k = 0; k + 1 < s.size(); ++k) {
            const Vec3 a = s[k].position();
            const Vec3 b = s[k + 1].position();
            const Vec3 ab = b - a;
            const double t = std::clamp(
                (p.position() - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
            const double d = (p.position() - (a + t * ab)).norm();
            if (d < best) {
              best = d;
              arg = e;
            }
          }
        }
        return arg;
      };
      CHECK(edge_of(pp.first) != edge_of(pp.second));
    }
  }
}

TEST_CASE("build_davs") {
  const DavsConfig cfg;
  SUBCASE("symmetric ring gives a symmetric frame") {
    SoiKeypointSet kps{keypoint_ring({0, 0, 0.7}, 0.25, {0, 0, 1}, 12), 0};
    const SpherePoint p0 = cam_at(0.9, 0.0);
    const DavsManifold m = build_davs(kps, p0, chart, cfg);
    validate_manifold(m);
    CHECK((m.centroid.position() - Vec3(0, 0, 1)).norm() < 1e-6);
    const TangentFrame frame = tangent_frame(m);
    CHECK(frame.theta1 == doctest::Approx(frame.theta2).epsilon(1e-9));
  }
  SUBCASE("equilateral triangle matches the grid oracle") {
    std::vector<Vec3> kp;
    for (int k = 0; k < 3; ++k) {
      const double lon = 2.0 * M_PI * k / 3.0;
      kp.push_back(0.5 * Vec3(std::sin(0.4) * std::cos(lon),
                              std::sin(0.4) * std::sin(lon), std::cos(0.4)));
    }
    const SpherePoint p0 = cam_at(1.0, 1.0);
    const DavsManifold m = build_davs(SoiKeypointSet{kp, 0}, p0, chart, cfg);
    const FrechetProblem prob(m.polygon.chart_points);
    const SpherePoint oracle = oracles::grid_mean_oracle(prob, 0.6, 1e-3);
    CHECK(geodesic_distance(m.centroid, oracle) <= 2e-3);
    CHECK((m.centroid.position() - Vec3(0, 0, 1)).norm() < 1e-6);
  }
  SUBCASE("bit-identical on repeated calls") {
    SoiKeypointSet kps{keypoint_ring({0.05, -0.02, 0.72}, 0.22, {0.1, 0.05, 1},
                                     9, 0.3),
                       5};
    const SpherePoint p0 = cam_at(0.8, 0.6);
    const DavsManifold a = build_davs(kps, p0, chart, cfg);
    const DavsManifold b = build_davs(kps, p0, chart, cfg);
    CHECK(a.centroid.position() == b.centroid.position());
    CHECK(a.p1.position() == b.p1.position());
    CHECK(a.p2.position() == b.p2.position());
    REQUIRE(a.path_p1_p2.samples().size() == b.path_p1_p2.samples().size());
    for (std::size_t i = 0; i < a.path_p1_p2.samples().size(); ++i) {
      CHECK(a.path_p1_p2.samples()[i].position() ==
            b.path_p1_p2.samples()[i].position());
    }
  }
  SUBCASE("camera inside the polygon still works") {
    SoiKeypointSet kps{keypoint_ring({0, 0, 0.7}, 0.3, {0, 0, 1}, 10), 0};
    const SpherePoint p0 = cam_at(0.05, 0.4);  // near the projected centroid
    const DavsManifold m = build_davs(kps, p0, chart, cfg);
    validate_manifold(m);
  }
  SUBCASE("DAVS stays inside the refined manifold") {
    std::mt19937 rng(71);
    for (int trial = 0; trial < 25; ++trial) {
      const Vec3 axis = oracles::random_unit(rng);
      std::vector<Vec3> raw;
      for (int i = 0; i < 9; ++i) {
        raw.push_back(oracles::random_in_cap(rng, axis, 0.4) * 0.7);
      }
      DavsManifold m = [&] {
        return build_davs(SoiKeypointSet{raw, 0},
                          chart.point(oracles::random_in_cap(rng, axis, 1.1)),
                          chart, cfg);
      }();
      std::vector<Vec3> loop_units;
      for (const SpherePoint& v : m.polygon.chart_points) {
        loop_units.push_back(v.unit());
      }
      for (const SpherePoint& s : m.path_p1_p2.samples()) {
        CHECK(inside_convex_loop(loop_units, s.unit(), 1e-9));
      }
    }
  }
  SUBCASE("rotation equivariance") {
    std::mt19937 rng(73);
    for (int trial = 0; trial < 10; ++trial) {
      SoiKeypointSet kps{keypoint_ring({0.04, 0.03, 0.68}, 0.24,
                                       {0.05, -0.08, 1}, 11, 0.7),
                         0};
      const SpherePoint p0 = cam_at(0.85, 0.5);
      const Eigen::Matrix3d q = oracles::random_rotation(rng);
      SoiKeypointSet rotated{{}, 0};
      for (const Vec3& k : kps.keypoints) rotated.keypoints.push_back(q * k);
      const DavsManifold m = build_davs(kps, p0, chart, DavsConfig{});
      const DavsManifold mr =
          build_davs(rotated, chart.point(q * p0.position()), chart,
                     DavsConfig{});
      CHECK((mr.centroid.position() - q * m.centroid.position()).norm() <=
            1e-6);
      CHECK((mr.p1.position() - q * m.p1.position()).norm() <= 1e-6);
      CHECK((mr.p2.position() - q * m.p2.position()).norm() <= 1e-6);
    }
  }
  SUBCASE("hemisphere clipping is flagged") {
    const SphereChart hemi(Vec3::Zero(), 1.0, true);
    SoiKeypointSet kps{keypoint_ring({0.4, 0.0, -0.02}, 0.1, {1, 0, 0}, 12),
                       0};
    const SpherePoint p0 =
        hemi.point(Vec3(std::sin(0.7), 0.0, std::cos(0.7)));
    const DavsManifold m = build_davs(kps, p0, hemi, DavsConfig{});
    CHECK(m.clipped);
  }
}

TEST_CASE("tangent frame and omega cone") {
  SoiKeypointSet kps{keypoint_ring({0, 0, 0.7}, 0.25, {0, 0, 1}, 12), 0};
  const SpherePoint p0 = cam_at(0.9, 0.0);
  const DavsManifold m = build_davs(kps, p0, chart, DavsConfig{});
  const TangentFrame frame = tangent_frame(m);

  SUBCASE("frame vectors are unit tangents") {
    for (const TangentVector* v : {&frame.v0, &frame.v1, &frame.v2}) {
      CHECK(v->norm() == doctest::Approx(1.0).epsilon(1e-12));
      CHECK(std::abs(v->direction().dot(p0.position())) < 1e-9);
    }
  }
  SUBCASE("angles add up across v0") {
    const double between = std::atan2(
        frame.v1.direction().cross(frame.v2.direction()).norm(),
        frame.v1.direction().dot(frame.v2.direction()));
    CHECK(between ==
          doctest::Approx(frame.theta1 + frame.theta2).epsilon(1e-9));
  }
  SUBCASE("omega = 0 collapses to v0 for every u") {
    for (double u : {0.0, 0.3, 0.5, 0.9, 1.0}) {
      const TangentVector d = sample_direction(frame, 0.0, u);
      CHECK((d.direction() - frame.v0.direction()).norm() < 1e-9);
    }
  }
  SUBCASE("omega = 1 endpoints are v2 and v1") {
    const TangentVector at0 = sample_direction(frame, 1.0, 0.0);
    const TangentVector at1 = sample_direction(frame, 1.0, 1.0);
    CHECK((at0.direction() - frame.v2.direction()).norm() < 1e-9);
    CHECK((at1.direction() - frame.v1.direction()).norm() < 1e-9);
  }
  SUBCASE("midpoint formula") {
    const TangentVector d = sample_direction(frame, 0.5, 0.5);
    const double expect =
        0.5 * (frame.theta2 * 0.5 + (frame.theta2 + frame.theta1 * 0.5));
    CHECK(cone_angle_of(frame, d.direction()) ==
          doctest::Approx(expect).epsilon(1e-9));
  }
  SUBCASE("intervals nest monotonically in omega") {
    double prev_lo = frame.theta2, prev_hi = frame.theta2;
    for (double w : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      const auto [lo, hi] = sampling_interval(frame, w);
      CHECK(lo <= prev_lo + 1e-12);
      CHECK(hi >= prev_hi - 1e-12);
      prev_lo = lo;
      prev_hi = hi;
    }
  }
  SUBCASE("degenerate frame rejected") {
    DavsManifold bad = m;
    bad.p1 = bad.camera;
    CHECK_THROWS_AS(tangent_frame(bad), Error);
  }
}
