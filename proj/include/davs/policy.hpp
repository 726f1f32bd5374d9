#pragma once

// Action exploration with a DAVS-constrained camera: stochastic affine
// policies with diagonal-Gaussian heads, rollouts for the constrained and
// baseline methods (unconstrained, visual servoing, static vision), a
// cross-entropy-method optimizer, and batch evaluation.

#include <cstdint>
#include <functional>
#include <vector>

#include "davs/env.hpp"
#include "davs/manifold.hpp"

namespace davs {

enum class Method { davs, no_davs, vs, static_vision };

const char* method_name(Method m);
Method method_from_name(const std::string& name);

// Observation features: normalized camera pitch/yaw, normalized end-effector
// position (3), A_rigid, ring fraction, and the bearing of the keypoint
// centroid in the camera's east/north tangent basis (2).
inline constexpr int kFeatureDim = 9;

// Heads: camera direction, camera step size, end-effector displacement (3).
// The direction head is read as in-cone u = (1 + tanh z)/2 under DAVS and as
// a wrapped angle over the full tangent circle when unconstrained; with a
// broad initial sigma the wrapped marginal is near-uniform on [0, 2pi).
inline constexpr int kHeads = 5;

struct PolicyParams {
  Eigen::Matrix<double, kHeads, kFeatureDim> weights;
  Eigen::Matrix<double, kHeads, 1> bias;
  Eigen::Matrix<double, kHeads, 1> log_sigma;

  static PolicyParams defaults();
  static constexpr int dim() { return kHeads * kFeatureDim + 2 * kHeads; }

  Eigen::VectorXd flatten() const;
  static PolicyParams unflatten(const Eigen::VectorXd& theta);
};

Eigen::Matrix<double, kFeatureDim, 1> featurize(const EnvConfig& cfg,
                                                const Observation& obs);

struct TransitionRecord {
  Observation before;
  ActionPair action;
  Observation after;
  double reward = 0.0;
};

// Per-step constraint record for replay validation of the omega-cone.
// alpha is recomputed from the emitted direction vector, not from the
// sampling formula.
struct ConstraintStep {
  double cone_lo = 0.0;
  double cone_hi = 0.0;
  double alpha = 0.0;
  bool fallback = false;
  bool constrained = false;
};

struct RolloutRecord {
  int length = 0;
  double discounted_return = 0.0;  // sum of gamma^(k-1) * r_k
  double undiscounted_return = 0.0;
  bool success = false;
  DoneReason reason = DoneReason::none;
  int fallback_steps = 0;
  std::vector<TransitionRecord> transitions;     // when recorded
  std::vector<ConstraintStep> constraint_trace;  // when recorded
};

struct RolloutOptions {
  bool record_transitions = false;
  bool record_constraints = false;
  // Rollout-time DAVS construction; coarser boundary sampling than the
  // default keeps per-step cost low without affecting the frame.
  DavsConfig davs_cfg{0.01, 1e-9, 100};
};

// Algorithm-1-style episode: per step read the SOI from the observation,
// sample the end-effector action, rebuild the DAVS at the current camera
// pose, and map the policy's direction output through the omega cone.
// DAVS failures fall back to unconstrained sampling for that step and are
// counted.
RolloutRecord davs_rollout(Environment& env, const PolicyParams& params,
                           double omega, std::uint64_t seed,
                           const RolloutOptions& opt = {});

RolloutRecord unconstrained_rollout(Environment& env,
                                    const PolicyParams& params,
                                    std::uint64_t seed,
                                    const RolloutOptions& opt = {});

RolloutRecord static_vision_rollout(Environment& env,
                                    const PolicyParams& params,
                                    std::uint64_t seed,
                                    const RolloutOptions& opt = {});

// Greedy visibility maximizer: probes 8 tangent directions for the best
// one-step visible-ring count; the end-effector opens the bag at a fixed
// rate until the aperture saturates. No learning, no randomness.
ActionPair visual_servoing_policy(const EnvConfig& cfg, const Observation& obs,
                                  int probe_directions = 8);

RolloutRecord visual_servoing_rollout(Environment& env, std::uint64_t seed,
                                      const RolloutOptions& opt = {});

// Method dispatch used by training, evaluation and the CLI.
RolloutRecord rollout(Environment& env, Method method,
                      const PolicyParams& params, double omega,
                      std::uint64_t seed, const RolloutOptions& opt = {});

// --- cross-entropy method ---

struct CemConfig {
  int population = 32;
  int elites = 8;
  int iterations = 60;
  int episodes_per_candidate = 2;
  double init_stddev = 0.5;
  double smoothing = 0.7;
  double stddev_floor = 0.02;
  int jobs = 1;
};

struct CemResult {
  Eigen::VectorXd best;        // best-scoring candidate ever sampled
  double best_score = 0.0;
  Eigen::VectorXd final_mean;  // distribution mean after the last iteration
};

// Generic derivative-free maximizer over R^dim. eval(iter, candidate, theta)
// returns the candidate's score. Deterministic for a fixed seed, including
// under parallel evaluation. score_curve receives (population mean, elite
// mean) per iteration when non-null.
CemResult cem_optimize(
    const Eigen::VectorXd& mu0, const CemConfig& cfg, std::uint64_t seed,
    const std::function<double(int, int, const Eigen::VectorXd&)>& eval,
    std::vector<std::array<double, 2>>* score_curve = nullptr);

struct CurvePoint {
  int iteration = 0;
  double mean_length = 0.0;
  double mean_return = 0.0;
  double success_pct = 0.0;
  double elite_mean_return = 0.0;
};

struct ConstraintStats {
  long total_steps = 0;
  long constrained_steps = 0;
  long in_cone_steps = 0;
  long fallback_steps = 0;
};

struct TrainResult {
  PolicyParams params;
  std::vector<CurvePoint> curve;
  ConstraintStats constraints;                // aggregated over all episodes
  std::vector<ConstraintStep> full_trace;     // when tracing was requested
  double best_score = 0.0;
};

// CEM policy search on the proxy environment; returns the better of the
// final distribution mean and the best candidate ever seen, judged on a
// fresh evaluation batch.
TrainResult train(const EnvConfig& env_cfg, Method method, double omega,
                  const CemConfig& cem, std::uint64_t seed,
                  bool record_trace = false);

// --- evaluation ---

struct EvalMetrics {
  double mean_length = 0.0;
  double mean_return = 0.0;  // discounted
  double success_pct = 0.0;
  int episodes = 0;
  ConstraintStats constraints;
};

EvalMetrics evaluate(const EnvConfig& env_cfg, Method method,
                     const PolicyParams& params, double omega,
                     const std::vector<std::uint64_t>& seeds, int jobs = 1,
                     std::vector<RolloutRecord>* records = nullptr,
                     const RolloutOptions& opt = {});

EvalMetrics metrics_from_records(const EnvConfig& cfg,
                                 const std::vector<RolloutRecord>& records);

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t index);

}  // namespace davs
