#include "davs/karcher.hpp"

#include <algorithm>
#include <cmath>

namespace davs {

FrechetProblem::FrechetProblem(std::vector<SpherePoint> anchors)
    : anchors_(std::move(anchors)),
      weights_(anchors_.size(), 1.0) {
  validate();
}

FrechetProblem::FrechetProblem(std::vector<SpherePoint> anchors,
                               std::vector<double> weights)
    : anchors_(std::move(anchors)), weights_(std::move(weights)) {
  validate();
}

void FrechetProblem::validate() {
  if (anchors_.empty()) {
    throw Error(Errc::invalid_input, "Frechet problem needs >= 1 anchor");
  }
  if (weights_.size() != anchors_.size()) {
    throw Error(Errc::invalid_input, "one weight per anchor required");
  }
  const SphereChart& chart = anchors_.front().chart();
  for (const SpherePoint& a : anchors_) {
    if (a.chart() != chart) {
      throw Error(Errc::chart_mismatch, "anchors on different charts");
    }
  }
  double sum = 0.0;
  for (double w : weights_) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(Errc::invalid_input, "weights must be finite and >= 0");
    }
    sum += w;
  }
  if (!(sum > 0.0)) {
    throw Error(Errc::invalid_input, "weights must not all vanish");
  }
  std::vector<Vec3> units;
  units.reserve(anchors_.size());
  for (const SpherePoint& a : anchors_) units.push_back(a.unit());
  if (!open_hemisphere_axis(units)) {
    throw Error(Errc::non_hemispheric,
                "anchors are not confined to one open hemisphere");
  }
  weight_sum_ = sum;
}

SpherePoint FrechetProblem::initial_guess() const {
  Vec3 acc = Vec3::Zero();
  for (std::size_t i = 0; i < anchors_.size(); ++i) {
    acc += weights_[i] * (anchors_[i].position() - chart().center());
  }
  if (acc.norm() == 0.0) return anchors_.front();
  return chart().project(chart().center() + acc);
}

double frechet_variance(const SpherePoint& p, const FrechetProblem& prob) {
  if (p.chart() != prob.chart()) {
    throw Error(Errc::chart_mismatch, "query point not on the problem chart");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < prob.anchors().size(); ++i) {
    const double d = geodesic_distance(p, prob.anchors()[i]);
    sum += prob.weights()[i] * d * d;
  }
  return sum;
}

TangentVector riemannian_gradient(const SpherePoint& p,
                                  const FrechetProblem& prob) {
  if (p.chart() != prob.chart()) {
    throw Error(Errc::chart_mismatch, "query point not on the problem chart");
  }
  Vec3 acc = Vec3::Zero();
  for (std::size_t i = 0; i < prob.anchors().size(); ++i) {
    acc += prob.weights()[i] * log_map(p, prob.anchors()[i]).direction();
  }
  // Strip radial roundoff from the sum.
  const Vec3 pu = p.unit();
  acc -= acc.dot(pu) * pu;
  return TangentVector(p, -2.0 * acc);
}

namespace {

// theta * cot(theta), series near zero.
double theta_cot(double theta) {
  if (theta < 1e-4) {
    const double t2 = theta * theta;
    return 1.0 - t2 / 3.0 - t2 * t2 / 45.0;
  }
  return theta / std::tan(theta);
}

}  // namespace

TangentVector hessian_apply(const SpherePoint& p, const FrechetProblem& prob,
                            const TangentVector& eta) {
  const double r = p.chart().radius();
  Vec3 acc = Vec3::Zero();
  for (std::size_t i = 0; i < prob.anchors().size(); ++i) {
    const double w = prob.weights()[i];
    const TangentVector lg = log_map(p, prob.anchors()[i]);
    const double dist = lg.norm();
    if (dist < 1e-14 * r) {
      acc += w * 2.0 * eta.direction();  // d^2 is locally Euclidean
      continue;
    }
    const Vec3 g = lg.direction() / dist;
    const Vec3 par = eta.direction().dot(g) * g;
    const Vec3 perp = eta.direction() - par;
    acc += w * (2.0 * par + 2.0 * theta_cot(dist / r) * perp);
  }
  const Vec3 pu = p.unit();
  acc -= acc.dot(pu) * pu;
  return TangentVector(p, acc);
}

namespace {

struct Subproblem2d {
  Eigen::Vector2d step;
  bool boundary = false;
  double predicted_reduction = 0.0;
};

// Exact min of g.eta + 0.5 eta^T H eta subject to |eta| <= radius,
// via eigendecomposition of the symmetric 2x2 H (More-Sorensen).
Subproblem2d solve_trust_region_2d(const Eigen::Matrix2d& H,
                                   const Eigen::Vector2d& g, double radius) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(H);
  const Eigen::Vector2d lam = eig.eigenvalues();
  const Eigen::Matrix2d Q = eig.eigenvectors();
  const Eigen::Vector2d gt = Q.transpose() * g;

  const auto model = [&](const Eigen::Vector2d& s) {
    return g.dot(s) + 0.5 * s.dot(H * s);
  };

  // Interior Newton point when H is positive definite.
  if (lam(0) > 0.0) {
    const Eigen::Vector2d s =
        Q * Eigen::Vector2d(-gt(0) / lam(0), -gt(1) / lam(1));
    if (s.norm() <= radius) {
      return {s, false, -model(s)};
    }
  }

  // Boundary solution: find mu >= max(0, -lam_min) with |s(mu)| = radius.
  const double mu_floor = std::max(0.0, -lam(0));
  const auto step_norm = [&](double mu) {
    double n2 = 0.0;
    for (int i = 0; i < 2; ++i) {
      const double d = lam(i) + mu;
      if (d > 0.0) n2 += (gt(i) / d) * (gt(i) / d);
    }
    return std::sqrt(n2);
  };

  // Hard case: no gradient component along the minimal eigenvector.
  const double g_min = std::abs(gt(0));
  if (g_min < 1e-14 * std::max(1.0, g.norm())) {
    const double mu = mu_floor;
    Eigen::Vector2d st(0.0, 0.0);
    if (lam(1) + mu > 0.0) st(1) = -gt(1) / (lam(1) + mu);
    double extra2 = radius * radius - st.squaredNorm();
    if (extra2 > 0.0) {
      Eigen::Vector2d vmin = Q.col(0);
      if (vmin(0) < 0.0 || (vmin(0) == 0.0 && vmin(1) < 0.0)) vmin = -vmin;
      const Eigen::Vector2d s = Q * st + std::sqrt(extra2) * vmin;
      return {s, true, -model(s)};
    }
    const Eigen::Vector2d s = Q * st * (radius / std::max(st.norm(), 1e-300));
    return {s, true, -model(s)};
  }

  // Safeguarded bisection on the secular equation (|s(mu)| decreasing).
  double lo = mu_floor;
  double hi = mu_floor + std::max(1.0, g.norm() / radius);
  while (step_norm(hi) > radius) hi = mu_floor + 2.0 * (hi - mu_floor);
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (step_norm(mid) > radius) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-14 * std::max(1.0, hi)) break;
  }
  const double mu = hi;
  Eigen::Vector2d st;
  for (int i = 0; i < 2; ++i) st(i) = -gt(i) / (lam(i) + mu);
  Eigen::Vector2d s = Q * st;
  if (s.norm() > 0.0) s *= radius / s.norm();
  return {s, true, -model(s)};
}

}  // namespace

TrustRegionState trust_region_step(const TrustRegionState& state,
                                   const FrechetProblem& prob,
                                   const TrustRegionConfig& cfg) {
  const SpherePoint& p = state.iterate;
  const double r = p.chart().radius();
  const TangentVector grad = riemannian_gradient(p, prob);

  TrustRegionState next = state;
  next.iteration = state.iteration + 1;

  const double gscale = 2.0 * prob.weight_sum() * r;
  if (grad.norm() <= 1e-15 * gscale) {
    next.rho = 1.0;  // stationary point, nothing to do
    return next;
  }

  const Vec3 pu = p.unit();
  const Vec3 e1 = any_orthonormal(pu);
  const Vec3 e2 = pu.cross(e1);
  const Eigen::Vector2d g(grad.direction().dot(e1), grad.direction().dot(e2));

  const TangentVector h1 = hessian_apply(p, prob, TangentVector(p, e1));
  const TangentVector h2 = hessian_apply(p, prob, TangentVector(p, e2));
  Eigen::Matrix2d H;
  H(0, 0) = h1.direction().dot(e1);
  H(1, 0) = h1.direction().dot(e2);
  H(0, 1) = h2.direction().dot(e1);
  H(1, 1) = h2.direction().dot(e2);
  H = 0.5 * (H + H.transpose().eval());

  if (!H.allFinite() || !g.allFinite()) {
    throw Error(Errc::numerical_failure, "non-finite trust-region model");
  }

  const double radius = state.delta * r;
  const Subproblem2d sub = solve_trust_region_2d(H, g, radius);
  if (!sub.step.allFinite() || !std::isfinite(sub.predicted_reduction)) {
    throw Error(Errc::numerical_failure, "non-finite subproblem solution");
  }
  if (sub.predicted_reduction <= 0.0) {
    next.rho = 1.0;
    return next;
  }

  const Vec3 eta = sub.step(0) * e1 + sub.step(1) * e2;
  const SpherePoint candidate = exp_map(TangentVector(p, eta));
  const double actual =
      frechet_variance(p, prob) - frechet_variance(candidate, prob);
  const double rho = actual / sub.predicted_reduction;
  if (!std::isfinite(rho)) {
    throw Error(Errc::numerical_failure, "non-finite reduction ratio");
  }

  next.rho = rho;
  if (rho > cfg.eta_accept) next.iterate = candidate;
  if (rho > cfg.grow_rho && sub.boundary) {
    next.delta = std::min(2.0 * state.delta, cfg.delta_max);
  } else if (rho < cfg.shrink_rho) {
    next.delta = state.delta / 4.0;
  }
  return next;
}

SpherePoint karcher_mean(const FrechetProblem& prob, double tol, int max_iter,
                         const TrustRegionConfig& cfg) {
  const double r = prob.chart().radius();
  const double gtol = 2.0 * prob.weight_sum() * r * tol;

  TrustRegionState state{prob.initial_guess(), cfg.delta0, 0, 1.0};
  for (int k = 0; k < max_iter; ++k) {
    if (riemannian_gradient(state.iterate, prob).norm() <= gtol) {
      return state.iterate;
    }
    state = trust_region_step(state, prob, cfg);
  }
  const double residual = riemannian_gradient(state.iterate, prob).norm();
  if (residual > 10.0 * gtol) {
    throw NonConvergenceError(state.iterate, residual);
  }
  return state.iterate;
}

}  // namespace davs
