#pragma once

// Independent oracles used by the unit and acceptance suites. These
// deliberately avoid the library's algorithm choices: the hull oracle uses
// gift wrapping after projecting at the generator axis (the implementation
// projects at the data centroid and runs a monotone chain), and the mean
// oracle is a dense grid search with local refinement.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "davs/geometry.hpp"
#include "davs/karcher.hpp"

namespace oracles {

using davs::Vec3;

inline Vec3 random_unit(std::mt19937& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v(n(rng), n(rng), n(rng));
  while (v.norm() < 1e-6) v = Vec3(n(rng), n(rng), n(rng));
  return v.normalized();
}

// Uniform direction within the spherical cap of angular radius `cap` around
// `axis`.
inline Vec3 random_in_cap(std::mt19937& rng, const Vec3& axis, double cap) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double cos_cap = std::cos(cap);
  const double z = cos_cap + (1.0 - cos_cap) * uni(rng);
  const double phi = 2.0 * M_PI * uni(rng);
  const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
  const Vec3 e1 = davs::any_orthonormal(axis);
  const Vec3 e2 = axis.cross(e1);
  return (z * axis + rho * (std::cos(phi) * e1 + std::sin(phi) * e2))
      .normalized();
}

inline Eigen::Matrix3d random_rotation(std::mt19937& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const Vec3 axis = random_unit(rng);
  const double angle = 2.0 * M_PI * uni(rng);
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

// Planar convex hull by gift wrapping (Jarvis march), CCW. Assumes no
// duplicate points.
inline std::vector<std::size_t> jarvis_hull(
    const std::vector<Eigen::Vector2d>& pts) {
  const std::size_t n = pts.size();
  std::size_t start = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (pts[i].x() < pts[start].x() ||
        (pts[i].x() == pts[start].x() && pts[i].y() < pts[start].y())) {
      start = i;
    }
  }
  std::vector<std::size_t> hull;
  std::size_t cur = start;
  do {
    hull.push_back(cur);
    std::size_t next = (cur + 1) % n;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == cur) continue;
      const Eigen::Vector2d a = pts[next] - pts[cur];
      const Eigen::Vector2d b = pts[i] - pts[cur];
      const double cross = a.x() * b.y() - a.y() * b.x();
      if (cross < 0.0 ||
          (cross == 0.0 && b.squaredNorm() > a.squaredNorm())) {
        next = i;
      }
    }
    cur = next;
  } while (cur != start && hull.size() <= n);
  return hull;
}

// Spherical hull oracle: gnomonic projection at a KNOWN containing axis +
// gift wrapping, canonicalized to start at the smallest index, CCW.
inline std::vector<std::size_t> hull_oracle(
    const std::vector<davs::SpherePoint>& points, const Vec3& axis) {
  const Vec3 e1 = davs::any_orthonormal(axis);
  const Vec3 e2 = axis.cross(e1);
  std::vector<Eigen::Vector2d> plane(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3 u = points[i].unit();
    const double w = u.dot(axis);
    plane[i] = Eigen::Vector2d(u.dot(e1) / w, u.dot(e2) / w);
  }
  std::vector<std::size_t> hull = jarvis_hull(plane);
  const auto first = std::min_element(hull.begin(), hull.end()) - hull.begin();
  std::rotate(hull.begin(), hull.begin() + first, hull.end());
  return hull;
}

// Brute-force Frechet-mean oracle: dense tangent-plane grid around the
// chordal mean (step in radians), then two local refinement passes.
inline davs::SpherePoint grid_mean_oracle(const davs::FrechetProblem& prob,
                                          double span, double step) {
  const davs::SphereChart& chart = prob.chart();
  const Vec3 c = prob.initial_guess().unit();
  const Vec3 e1 = davs::any_orthonormal(c);
  const Vec3 e2 = c.cross(e1);

  std::vector<Vec3> anchor_units;
  std::vector<double> w;
  for (std::size_t i = 0; i < prob.anchors().size(); ++i) {
    anchor_units.push_back(prob.anchors()[i].unit());
    w.push_back(prob.weights()[i]);
  }
  const double r = chart.radius();
  const auto variance_at = [&](const Vec3& u) {
    double sum = 0.0;
    for (std::size_t i = 0; i < anchor_units.size(); ++i) {
      const double d =
          r * std::acos(std::clamp(u.dot(anchor_units[i]), -1.0, 1.0));
      sum += w[i] * d * d;
    }
    return sum;
  };
  const auto point_at = [&](double a, double b) {
    const double rho = std::hypot(a, b);
    if (rho < 1e-15) return c;
    const Vec3 t = (a * e1 + b * e2) / rho;
    return Vec3(std::cos(rho) * c + std::sin(rho) * t);
  };

  double best_a = 0.0, best_b = 0.0;
  double best = variance_at(c);
  const auto scan = [&](double ca, double cb, double half, double h) {
    const int n = static_cast<int>(std::ceil(half / h));
    for (int i = -n; i <= n; ++i) {
      for (int j = -n; j <= n; ++j) {
        const double a = ca + i * h;
        const double b = cb + j * h;
        const double v = variance_at(point_at(a, b));
        if (v < best) {
          best = v;
          best_a = a;
          best_b = b;
        }
      }
    }
  };
  scan(0.0, 0.0, span, step);
  scan(best_a, best_b, 2.0 * step, step / 10.0);
  scan(best_a, best_b, step / 5.0, step / 100.0);
  const Vec3 u = point_at(best_a, best_b);
  return chart.project(chart.center() + u * r);
}

// Parallel transport of a tangent vector at p along the geodesic to q.
inline Vec3 parallel_transport(const davs::SpherePoint& p,
                               const davs::SpherePoint& q, const Vec3& v) {
  const Vec3 pu = p.unit();
  const Vec3 qu = q.unit();
  const double dot = std::clamp(pu.dot(qu), -1.0, 1.0);
  const Vec3 cross = pu.cross(qu);
  const double s = cross.norm();
  if (s < 1e-14) return v;
  const Vec3 axis = cross / s;
  const double theta = std::atan2(s, dot);
  return Eigen::AngleAxisd(theta, axis).toRotationMatrix() * v;
}

// Kolmogorov-Smirnov statistic against U(lo, hi).
inline double ks_statistic(std::vector<double> xs, double lo, double hi) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double cdf = (xs[i] - lo) / (hi - lo);
    d = std::max(d, std::abs(cdf - (i + 1) / n));
    d = std::max(d, std::abs(cdf - i / n));
  }
  return d;
}

// chi-square statistic of counts against a uniform expectation.
inline double chi_square_uniform(const std::vector<int>& counts) {
  double total = 0.0;
  for (int c : counts) total += c;
  const double expected = total / counts.size();
  double chi = 0.0;
  for (int c : counts) {
    const double d = c - expected;
    chi += d * d / expected;
  }
  return chi;
}

}  // namespace oracles
