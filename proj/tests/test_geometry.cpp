#include <doctest.h>

#include <random>

#include "davs/geometry.hpp"
#include "oracles.hpp"

using namespace davs;

namespace {

const SphereChart unit_chart(Vec3::Zero(), 1.0);

SpherePoint up(const Vec3& u) { return unit_chart.point(u.normalized()); }

}  // namespace

TEST_CASE("geodesic distance basics") {
  const SpherePoint n = up({0, 0, 1});
  const SpherePoint x = up({1, 0, 0});
  CHECK(geodesic_distance(n, x) == doctest::Approx(M_PI / 2).epsilon(1e-12));
  CHECK(geodesic_distance(n, n) == 0.0);
  const SpherePoint q = up({0, std::sin(0.3), std::cos(0.3)});
  CHECK(geodesic_distance(n, q) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(geodesic_distance(q, n) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("geodesic distance rejects chart mismatch") {
  const SphereChart other(Vec3::Zero(), 2.0);
  const SpherePoint p = unit_chart.point({0, 0, 1});
  const SpherePoint q = other.point({0, 0, 2});
  CHECK_THROWS_WITH_AS(geodesic_distance(p, q),
                       doctest::Contains("chart"), Error);
}

TEST_CASE("exp map") {
  const SpherePoint n = up({0, 0, 1});
  SUBCASE("quarter circle") {
    const SpherePoint moved = exp_map(TangentVector(n, {M_PI / 2, 0, 0}));
    CHECK((moved.position() - Vec3(1, 0, 0)).norm() < 1e-12);
  }
  SUBCASE("zero vector is identity") {
    const SpherePoint moved = exp_map(TangentVector(n, Vec3::Zero()));
    CHECK(moved.position() == n.position());
  }
  SUBCASE("analytic rotation") {
    const SpherePoint moved = exp_map(TangentVector(n, {0.3, 0, 0}));
    CHECK((moved.position() - Vec3(std::sin(0.3), 0, std::cos(0.3))).norm() <
          1e-12);
  }
}

TEST_CASE("log map") {
  const SpherePoint n = up({0, 0, 1});
  SUBCASE("p == q gives zero") {
    CHECK(log_map(n, n).norm() == doctest::Approx(0.0));
  }
  SUBCASE("inverse of exp example") {
    const TangentVector v = log_map(n, up({1, 0, 0}));
    CHECK((v.direction() - Vec3(M_PI / 2, 0, 0)).norm() < 1e-12);
  }
  SUBCASE("antipodal input refused") {
    CHECK_THROWS_AS(log_map(n, up({0, 0, -1})), Error);
  }
  SUBCASE("round trip on random pairs") {
    std::mt19937 rng(7);
    for (int i = 0; i < 500; ++i) {
      const SpherePoint p = up(oracles::random_unit(rng));
      Vec3 qdir = oracles::random_unit(rng);
      if (qdir.dot(p.unit()) < -0.99) qdir = -qdir;  // avoid antipodes
      const SpherePoint q = up(qdir);
      const SpherePoint back = exp_map(log_map(p, q));
      CHECK(geodesic_distance(back, q) <= 1e-8);
    }
  }
}

TEST_CASE("geodesic path sampling") {
  SUBCASE("sample count from spacing") {
    const SpherePoint a = up({0, 0, 1});
    const SpherePoint b = exp_map(TangentVector(a, {1.0, 0, 0}));
    const GeodesicPath path = geodesic_path(a, b, 0.25);
    CHECK(path.samples().size() == 5);
    CHECK(path.arc_length() == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("degenerate single-sample path") {
    const SpherePoint a = up({0, 0, 1});
    const GeodesicPath path = geodesic_path(a, a, 0.25);
    CHECK(path.samples().size() == 1);
    CHECK(path.arc_length() == 0.0);
  }
  SUBCASE("pole to equator stays in plane") {
    const GeodesicPath path = geodesic_path(up({0, 0, 1}), up({1, 0, 0}), 0.1);
    CHECK(path.samples().size() == 17);
    for (const SpherePoint& s : path.samples()) {
      CHECK(std::abs(s.position().y()) < 1e-12);
    }
    CHECK(path.samples().front().position() == Vec3(0, 0, 1));
    CHECK(path.samples().back().position() == Vec3(1, 0, 0));
  }
  SUBCASE("antipodal endpoints refused") {
    CHECK_THROWS_AS(geodesic_path(up({0, 0, 1}), up({0, 0, -1}), 0.1), Error);
  }
  SUBCASE("spacing bound and arc additivity") {
    std::mt19937 rng(21);
    for (int i = 0; i < 50; ++i) {
      const SpherePoint a = up(oracles::random_unit(rng));
      const SpherePoint b =
          up(oracles::random_in_cap(rng, a.unit(), 2.0));
      const GeodesicPath path = geodesic_path(a, b, 0.07);
      double sum = 0.0;
      for (std::size_t k = 0; k + 1 < path.samples().size(); ++k) {
        const double d =
            geodesic_distance(path.samples()[k], path.samples()[k + 1]);
        CHECK(d <= 0.07 + 1e-9);
        sum += d;
      }
      CHECK(sum == doctest::Approx(geodesic_distance(a, b)).epsilon(1e-6));
    }
  }
}

TEST_CASE("radial projection") {
  const SphereChart chart2(Vec3::Zero(), 2.0);
  SUBCASE("scales along the axis") {
    const SpherePoint p = radial_project({0, 0, 0.5}, chart2);
    CHECK((p.position() - Vec3(0, 0, 2)).norm() < 1e-12);
  }
  SUBCASE("idempotent") {
    std::mt19937 rng(3);
    for (int i = 0; i < 100; ++i) {
      const Vec3 x = 3.0 * oracles::random_unit(rng);
      const SpherePoint once = radial_project(x, unit_chart);
      const SpherePoint twice = radial_project(once.position(), unit_chart);
      CHECK((once.position() - twice.position()).norm() <= 1e-12);
    }
  }
  SUBCASE("unit normalization") {
    const SpherePoint p = radial_project({3, 4, 0}, unit_chart);
    CHECK((p.position() - Vec3(0.6, 0.8, 0)).norm() < 1e-12);
  }
  SUBCASE("center rejected") {
    CHECK_THROWS_AS(radial_project(Vec3::Zero(), unit_chart), Error);
  }
}

TEST_CASE("spherical convex hull") {
  SUBCASE("triangle comes back whole and CCW") {
    std::vector<SpherePoint> pts{up({0.1, 0, 1}), up({-0.1, 0.1, 1}),
                                 up({0, -0.15, 1})};
    const auto loop = spherical_convex_hull(pts);
    REQUIRE(loop.size() == 3);
    CHECK(loop[0] == 0);  // canonical start at the smallest index
    // CCW seen from outside: positive triple products along the loop.
    std::vector<Vec3> units;
    for (std::size_t i : loop) units.push_back(pts[i].unit());
    CHECK(units[0].cross(units[1]).dot(units[2]) > 0.0);
  }
  SUBCASE("interior point excluded, matches the planar oracle") {
    std::vector<SpherePoint> pts{up({0.2, 0.2, 1}), up({-0.2, 0.2, 1}),
                                 up({-0.2, -0.2, 1}), up({0.2, -0.2, 1}),
                                 up({0.01, 0.02, 1})};
    const auto loop = spherical_convex_hull(pts);
    CHECK(loop.size() == 4);
    CHECK(std::find(loop.begin(), loop.end(), 4) == loop.end());
    CHECK(loop == oracles::hull_oracle(pts, Vec3(0, 0, 1)));
  }
  SUBCASE("duplicates collapse") {
    std::vector<SpherePoint> pts{up({0.1, 0, 1}), up({0.1, 0, 1}),
                                 up({-0.1, 0.1, 1}), up({0, -0.15, 1})};
    const auto loop = spherical_convex_hull(pts);
    CHECK(loop.size() == 3);
  }
  SUBCASE("too few distinct points") {
    std::vector<SpherePoint> pts{up({0.1, 0, 1}), up({0.1, 0, 1}),
                                 up({-0.1, 0, 1})};
    CHECK_THROWS_AS(spherical_convex_hull(pts), Error);
  }
  SUBCASE("collinear points give a degenerate hull") {
    std::vector<SpherePoint> pts;
    for (int i = 0; i < 5; ++i) {
      pts.push_back(up({0.05 * i - 0.1, 0, 1}));
    }
    CHECK_THROWS_WITH_AS(spherical_convex_hull(pts),
                         doctest::Contains("collinear"), Error);
  }
  SUBCASE("hemisphere-spanning input rejected") {
    std::vector<SpherePoint> pts{up({1, 0, 0.01}), up({-1, 0, 0.01}),
                                 up({0, 1, 0.01}), up({0, -1, 0.01}),
                                 up({0, 0, -1})};
    CHECK_THROWS_AS(spherical_convex_hull(pts), Error);
  }
  SUBCASE("containment: inputs have non-negative winding") {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
      const Vec3 axis = oracles::random_unit(rng);
      std::vector<SpherePoint> pts;
      for (int i = 0; i < 20; ++i) {
        pts.push_back(up(oracles::random_in_cap(rng, axis, 0.7)));
      }
      const auto loop = spherical_convex_hull(pts);
      std::vector<Vec3> units;
      for (std::size_t i : loop) units.push_back(pts[i].unit());
      for (const SpherePoint& p : pts) {
        CHECK(inside_convex_loop(units, p.unit(), 1e-9));
      }
    }
  }
}

TEST_CASE("tangent of path") {
  const SpherePoint n = up({0, 0, 1});
  const SpherePoint x = up({1, 0, 0});
  const GeodesicPath path = geodesic_path(n, x, 0.05);
  SUBCASE("points along the path from the start") {
    const TangentVector t = tangent_of_path_at(path, n);
    CHECK((t.direction() - Vec3(1, 0, 0)).norm() < 1e-12);
  }
  SUBCASE("reversed at the far endpoint") {
    const TangentVector t = tangent_of_path_at(path, x);
    CHECK((t.direction() - Vec3(0, 0, 1)).norm() < 1e-12);
  }
  SUBCASE("interior point rejected") {
    CHECK_THROWS_AS(tangent_of_path_at(path, up({0.3, 0.4, 0.86})), Error);
  }
  SUBCASE("matches finite differences of the samples") {
    std::mt19937 rng(5);
    for (int i = 0; i < 30; ++i) {
      const SpherePoint a = up(oracles::random_unit(rng));
      const SpherePoint b = up(oracles::random_in_cap(rng, a.unit(), 1.5));
      if (geodesic_distance(a, b) < 0.1) continue;
      const GeodesicPath p = geodesic_path(a, b, 1e-4);
      const TangentVector t = tangent_of_path_at(p, a);
      const Vec3 fd = (p.samples()[1].position() - a.position()).normalized();
      CHECK((t.direction() - fd).norm() < 1e-4);
    }
  }
}

TEST_CASE("triangle inequality") {
  std::mt19937 rng(13);
  for (int i = 0; i < 200; ++i) {
    const SpherePoint p = up(oracles::random_unit(rng));
    const SpherePoint q = up(oracles::random_unit(rng));
    const SpherePoint s = up(oracles::random_unit(rng));
    CHECK(geodesic_distance(p, s) <=
          geodesic_distance(p, q) + geodesic_distance(q, s) + 1e-9);
  }
}

TEST_CASE("tangent vector validation") {
  const SpherePoint n = up({0, 0, 1});
  CHECK_THROWS_AS(TangentVector(n, {0, 0, 1}), Error);
  CHECK_NOTHROW(TangentVector(n, {0.3, -0.2, 0}));
}

TEST_CASE("chart validates radius") {
  CHECK_THROWS_AS(SphereChart(Vec3::Zero(), 0.0), Error);
  CHECK_THROWS_AS(unit_chart.point({0, 0, 1.1}), Error);
  CHECK_NOTHROW(unit_chart.point({0, 0, 1.0 + 5e-10}));
}
