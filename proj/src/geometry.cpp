#include "davs/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace davs {

const char* errc_name(Errc code) {
  switch (code) {
    case Errc::invalid_input: return "invalid-input";
    case Errc::chart_mismatch: return "chart-mismatch";
    case Errc::degenerate_log: return "degenerate-log";
    case Errc::degenerate_path: return "degenerate-path";
    case Errc::undefined_direction: return "undefined-direction";
    case Errc::insufficient_points: return "insufficient-points";
    case Errc::non_hemispheric: return "non-hemispheric";
    case Errc::degenerate_hull: return "degenerate-hull";
    case Errc::numerical_failure: return "numerical-failure";
    case Errc::non_convergence: return "non-convergence";
    case Errc::malformed_boundary: return "malformed-boundary";
    case Errc::degenerate_frame: return "degenerate-frame";
    case Errc::infeasible_config: return "infeasible-config";
    case Errc::invalid_transition: return "invalid-transition";
    case Errc::config_error: return "config-error";
    case Errc::io_error: return "io-error";
  }
  return "unknown";
}

SphereChart::SphereChart(const Vec3& center, double radius, bool hemisphere)
    : center_(center), radius_(radius), hemisphere_(hemisphere) {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw Error(Errc::invalid_input, "chart radius must be positive");
  }
}

bool SphereChart::operator==(const SphereChart& other) const {
  return center_ == other.center_ && radius_ == other.radius_ &&
         hemisphere_ == other.hemisphere_;
}

bool SphereChart::on_sphere(const Vec3& position) const {
  return std::abs((position - center_).norm() - radius_) <=
         kRadiusTol * radius_;
}

bool SphereChart::in_hemisphere(const Vec3& position) const {
  if (!hemisphere_) return true;
  return position.z() >= center_.z() - kRadiusTol * radius_;
}

SpherePoint SphereChart::point(const Vec3& position) const {
  if (!on_sphere(position)) {
    throw Error(Errc::invalid_input, "position is not on the chart sphere");
  }
  return SpherePoint(position, *this);
}

SpherePoint SphereChart::project(const Vec3& x) const {
  const Vec3 d = x - center_;
  const double n = d.norm();
  if (n == 0.0) {
    throw Error(Errc::undefined_direction,
                "cannot project the chart center onto the sphere");
  }
  return SpherePoint(center_ + d * (radius_ / n), *this);
}

TangentVector::TangentVector(const SpherePoint& base, const Vec3& direction)
    : base_(base), direction_(direction) {
  const double n = direction.norm();
  const double r = base.chart().radius();
  const double radial =
      std::abs(direction.dot(base.position() - base.chart().center()));
  // Absolute floor keeps roundoff-sized vectors (e.g. gradients at a
  // stationary point) constructible.
  if (radial > kTangencyTol * r * n + 1e-14 * r * r) {
    throw Error(Errc::invalid_input, "direction is not tangent at base point");
  }
}

namespace {

void require_same_chart(const SpherePoint& p, const SpherePoint& q) {
  if (p.chart() != q.chart()) {
    throw Error(Errc::chart_mismatch, "points live on different charts");
  }
}

// acos(<pu, qu>) evaluated as atan2(|pu x qu|, <pu, qu>); identical value,
// well conditioned at both ends of the range.
double unit_angle(const SpherePoint& p, const SpherePoint& q) {
  const Vec3 pu = p.unit();
  const Vec3 qu = q.unit();
  return std::atan2(pu.cross(qu).norm(), pu.dot(qu));
}

}  // namespace

double geodesic_distance(const SpherePoint& p, const SpherePoint& q) {
  require_same_chart(p, q);
  return p.chart().radius() * unit_angle(p, q);
}

SpherePoint exp_map(const TangentVector& v) {
  const SpherePoint& base = v.base();
  const double n = v.norm();
  if (n == 0.0) return base;
  const SphereChart& chart = base.chart();
  const double phi = n / chart.radius();
  const Vec3 radial = base.position() - chart.center();
  const Vec3 dir = v.direction() / n;
  const Vec3 moved =
      std::cos(phi) * radial + std::sin(phi) * chart.radius() * dir;
  // Renormalize so long exp chains do not drift off the sphere.
  return chart.project(chart.center() + moved);
}

TangentVector log_map(const SpherePoint& p, const SpherePoint& q) {
  require_same_chart(p, q);
  const double theta = unit_angle(p, q);
  if (theta > M_PI - kAntipodalTol) {
    throw Error(Errc::degenerate_log, "log map undefined for antipodal points");
  }
  const double r = p.chart().radius();
  const Vec3 pu = p.unit();
  const Vec3 qu = q.unit();
  Vec3 perp = qu - qu.dot(pu) * pu;
  const double pn = perp.norm();
  if (pn < 1e-14) {
    // q == p to machine precision; also covers first-order small angles.
    Vec3 chord = q.position() - p.position();
    chord -= chord.dot(pu) * pu;
    return TangentVector(p, chord);
  }
  return TangentVector(p, perp * (theta * r / pn));
}

GeodesicPath geodesic_path(const SpherePoint& p, const SpherePoint& q,
                           double max_spacing) {
  require_same_chart(p, q);
  if (!(max_spacing > 0.0)) {
    throw Error(Errc::invalid_input, "max_spacing must be positive");
  }
  const double theta = unit_angle(p, q);
  if (theta > M_PI - kAntipodalTol) {
    throw Error(Errc::degenerate_path,
                "geodesic path undefined for antipodal endpoints");
  }
  const SphereChart& chart = p.chart();
  const double r = chart.radius();
  const double arc = theta * r;
  const auto count =
      static_cast<std::size_t>(std::ceil(arc / max_spacing)) + 1;

  std::vector<SpherePoint> samples;
  samples.reserve(count);
  samples.push_back(p);
  if (count >= 2) {
    // Arc frame: c(s) = cos(s) * pu + sin(s) * e, exact on the great circle.
    const Vec3 pu = p.unit();
    const Vec3 qu = q.unit();
    Vec3 e = qu - qu.dot(pu) * pu;
    const double en = e.norm();
    if (en > 1e-14) {
      e /= en;
      for (std::size_t k = 1; k + 1 < count; ++k) {
        const double s = theta * static_cast<double>(k) /
                         static_cast<double>(count - 1);
        const Vec3 u = std::cos(s) * pu + std::sin(s) * e;
        samples.push_back(chart.project(chart.center() + u * r));
      }
    } else {
      for (std::size_t k = 1; k + 1 < count; ++k) samples.push_back(p);
    }
    samples.push_back(q);
  }
  return GeodesicPath(p, q, std::move(samples), arc);
}

GeodesicPath GeodesicPath::from_samples(std::vector<SpherePoint> samples) {
  if (samples.empty()) {
    throw Error(Errc::invalid_input, "path needs at least one sample");
  }
  double arc = 0.0;
  for (std::size_t i = 0; i + 1 < samples.size(); ++i) {
    arc += geodesic_distance(samples[i], samples[i + 1]);
  }
  SpherePoint a = samples.front();
  SpherePoint b = samples.back();
  return GeodesicPath(std::move(a), std::move(b), std::move(samples), arc);
}

SpherePoint radial_project(const Vec3& x, const SphereChart& chart) {
  return chart.project(x);
}

Vec3 any_orthonormal(const Vec3& u) {
  // Pick the coordinate axis least aligned with u; deterministic.
  Vec3 axis = Vec3::UnitX();
  double best = std::abs(u.x());
  if (std::abs(u.y()) < best) {
    axis = Vec3::UnitY();
    best = std::abs(u.y());
  }
  if (std::abs(u.z()) < best) axis = Vec3::UnitZ();
  return (axis - axis.dot(u) * u).normalized();
}

std::optional<Vec3> open_hemisphere_axis(const std::vector<Vec3>& units) {
  if (units.empty()) return std::nullopt;
  Vec3 axis = Vec3::Zero();
  for (const Vec3& u : units) axis += u;
  if (axis.norm() < 1e-12) axis = units.front();
  axis.normalize();

  const auto min_dot = [&units](const Vec3& u) {
    double m = 1.0;
    std::size_t worst = 0;
    for (std::size_t i = 0; i < units.size(); ++i) {
      const double d = u.dot(units[i]);
      if (d < m) {
        m = d;
        worst = i;
      }
    }
    return std::pair<double, std::size_t>(m, worst);
  };

  auto [margin, worst] = min_dot(axis);
  for (int iter = 0; iter < 512 && margin <= 1e-12; ++iter) {
    axis = (axis + units[worst]).normalized();
    std::tie(margin, worst) = min_dot(axis);
  }
  if (margin <= 1e-12) return std::nullopt;
  return axis;
}

bool inside_convex_loop(const std::vector<Vec3>& loop_units, const Vec3& q,
                        double tol) {
  for (std::size_t i = 0; i < loop_units.size(); ++i) {
    const Vec3& a = loop_units[i];
    const Vec3& b = loop_units[(i + 1) % loop_units.size()];
    if (a.cross(b).dot(q) < -tol) return false;
  }
  return true;
}

namespace {

// Andrew monotone chain, counterclockwise, collinear points dropped.
std::vector<std::size_t> planar_hull_ccw(
    const std::vector<Eigen::Vector2d>& pts) {
  const std::size_t n = pts.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&pts](std::size_t i, std::size_t j) {
    if (pts[i].x() != pts[j].x()) return pts[i].x() < pts[j].x();
    return pts[i].y() < pts[j].y();
  });

  const auto cross = [&pts](std::size_t o, std::size_t a, std::size_t b) {
    const Eigen::Vector2d da = pts[a] - pts[o];
    const Eigen::Vector2d db = pts[b] - pts[o];
    return da.x() * db.y() - da.y() * db.x();
  };

  std::vector<std::size_t> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t idx = 0; idx < n; ++idx) {  // lower
    const std::size_t i = order[idx];
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], i) <= 0.0) --k;
    hull[k++] = i;
  }
  const std::size_t lower = k + 1;
  for (std::size_t idx = n; idx-- > 0;) {  // upper
    const std::size_t i = order[idx];
    while (k >= lower && cross(hull[k - 2], hull[k - 1], i) <= 0.0) --k;
    hull[k++] = i;
  }
  hull.resize(k > 0 ? k - 1 : 0);
  return hull;
}

}  // namespace

std::vector<std::size_t> spherical_convex_hull(
    const std::vector<SpherePoint>& points) {
  if (points.size() < 3) {
    throw Error(Errc::insufficient_points,
                "spherical hull needs at least 3 points");
  }
  const SphereChart& chart = points.front().chart();
  for (const SpherePoint& p : points) {
    if (p.chart() != chart) {
      throw Error(Errc::chart_mismatch, "hull points on different charts");
    }
  }

  // Merge duplicates to the first occurrence.
  const double merge = kMergeTol * chart.radius();
  std::vector<std::size_t> rep;  // indices of distinct representatives
  rep.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool dup = false;
    for (std::size_t j : rep) {
      if ((points[i].position() - points[j].position()).norm() <= merge) {
        dup = true;
        break;
      }
    }
    if (!dup) rep.push_back(i);
  }
  if (rep.size() < 3) {
    throw Error(Errc::insufficient_points,
                "fewer than 3 distinct points after merging duplicates");
  }

  std::vector<Vec3> units;
  units.reserve(rep.size());
  for (std::size_t j : rep) units.push_back(points[j].unit());

  const auto axis = open_hemisphere_axis(units);
  if (!axis) {
    throw Error(Errc::non_hemispheric,
                "points are not confined to one open hemisphere");
  }

  // Gnomonic projection onto the tangent plane at the axis; great circles map
  // to straight lines, so the planar hull is the spherical hull.
  const Vec3 e1 = any_orthonormal(*axis);
  const Vec3 e2 = axis->cross(e1);  // right-handed (e1, e2, axis)
  std::vector<Eigen::Vector2d> plane(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) {
    const double w = units[i].dot(*axis);
    plane[i] = Eigen::Vector2d(units[i].dot(e1) / w, units[i].dot(e2) / w);
  }

  std::vector<std::size_t> hull = planar_hull_ccw(plane);
  if (hull.size() < 3) {
    throw Error(Errc::degenerate_hull,
                "input points are collinear on one great circle");
  }

  std::vector<std::size_t> loop;
  loop.reserve(hull.size());
  for (std::size_t h : hull) loop.push_back(rep[h]);

  // Canonical start: rotate so the loop begins at its smallest index.
  const auto first =
      std::min_element(loop.begin(), loop.end()) - loop.begin();
  std::rotate(loop.begin(), loop.begin() + first, loop.end());
  return loop;
}

TangentVector tangent_of_path_at(const GeodesicPath& path,
                                 const SpherePoint& at) {
  const double tol = kRadiusTol * at.chart().radius();
  const SpherePoint* far = nullptr;
  if ((at.position() - path.a().position()).norm() <= tol) {
    far = &path.b();
  } else if ((at.position() - path.b().position()).norm() <= tol) {
    far = &path.a();
  } else {
    throw Error(Errc::invalid_input, "query point is not a path endpoint");
  }
  TangentVector v = log_map(at, *far);
  const double n = v.norm();
  if (n == 0.0) {
    throw Error(Errc::invalid_input,
                "tangent undefined for a zero-length path");
  }
  return TangentVector(at, v.direction() / n);
}

}  // namespace davs
