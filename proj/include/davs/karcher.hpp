#pragma once

// Karcher (Frechet) mean of points on a sphere chart via a Riemannian
// trust-region method. The tangent space is 2-D, so the constrained
// quadratic subproblem is solved exactly (More-Sorensen on the 2x2
// eigendecomposition) instead of by truncated CG.

#include <vector>

#include "davs/geometry.hpp"

namespace davs {

struct TrustRegionConfig {
  double delta0 = 0.1;          // initial trust radius, radians
  double delta_max = M_PI / 4;  // radians
  double eta_accept = 0.1;      // accept step when rho > eta_accept
  double shrink_rho = 0.25;     // rho below this quarters the radius
  double grow_rho = 0.75;       // rho above this (boundary active) doubles it
};

class FrechetProblem {
 public:
  // Uniform weights. Anchors must share one chart and fit in an open
  // hemisphere (uniqueness of the mean).
  explicit FrechetProblem(std::vector<SpherePoint> anchors);
  FrechetProblem(std::vector<SpherePoint> anchors, std::vector<double> weights);

  const std::vector<SpherePoint>& anchors() const { return anchors_; }
  const std::vector<double>& weights() const { return weights_; }
  const SphereChart& chart() const { return anchors_.front().chart(); }
  double weight_sum() const { return weight_sum_; }

  // Chordal (Euclidean) mean projected back to the sphere; lies in the
  // uniqueness basin for hemispheric anchors.
  SpherePoint initial_guess() const;

 private:
  void validate();

  std::vector<SpherePoint> anchors_;
  std::vector<double> weights_;
  double weight_sum_ = 0.0;
};

struct TrustRegionState {
  SpherePoint iterate;
  double delta;      // trust radius, radians (arc constraint is delta * r)
  int iteration = 0;
  double rho = 1.0;  // last model-vs-actual reduction ratio
};

// Sum of weighted squared geodesic distances from p to the anchors.
double frechet_variance(const SpherePoint& p, const FrechetProblem& prob);

// -2 * sum_i w_i * log_map(p, X_i); vanishes at the mean.
TangentVector riemannian_gradient(const SpherePoint& p,
                                  const FrechetProblem& prob);

// Closed-form spherical Hessian of the variance applied to eta. Per anchor
// at angle theta: 2 * eta_par + 2 * theta * cot(theta) * eta_perp, where
// eta_par is the component along the geodesic toward the anchor.
TangentVector hessian_apply(const SpherePoint& p, const FrechetProblem& prob,
                            const TangentVector& eta);

// One exact trust-region step. Accepts when rho > 0.1; radius doubles on
// rho > 0.75 with the boundary active and quarters on rho < 0.25.
TrustRegionState trust_region_step(const TrustRegionState& state,
                                   const FrechetProblem& prob,
                                   const TrustRegionConfig& cfg = {});

// Iterates trust_region_step from the chordal initial guess until
// |grad| <= 2 * r * sum(w) * tol or max_iter. Throws non_convergence
// (carrying the last iterate) when the residual is still above ten times
// the threshold at exhaustion.
SpherePoint karcher_mean(const FrechetProblem& prob, double tol = 1e-8,
                         int max_iter = 100,
                         const TrustRegionConfig& cfg = {});

class NonConvergenceError : public Error {
 public:
  NonConvergenceError(const SpherePoint& last, double residual)
      : Error(Errc::non_convergence,
              "trust-region iteration exhausted, |grad| = " +
                  std::to_string(residual)),
        last_(last) {}
  const SpherePoint& last_iterate() const { return last_; }

 private:
  SpherePoint last_;
};

}  // namespace davs
