#include "davs/policy.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>
#include <thread>

namespace davs {

const char* method_name(Method m) {
  switch (m) {
    case Method::davs: return "davs";
    case Method::no_davs: return "no-davs";
    case Method::vs: return "vs";
    case Method::static_vision: return "static";
  }
  return "unknown";
}

Method method_from_name(const std::string& name) {
  if (name == "davs") return Method::davs;
  if (name == "no-davs") return Method::no_davs;
  if (name == "vs") return Method::vs;
  if (name == "static") return Method::static_vision;
  throw Error(Errc::config_error, "unknown method '" + name + "'");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream,
                       std::uint64_t index) {
  auto splitmix = [](std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  };
  return splitmix(splitmix(seed + 0x632BE59BD9B4E019ull * stream) + index);
}

PolicyParams PolicyParams::defaults() {
  PolicyParams p;
  p.weights.setZero();
  p.bias.setZero();
  // Broad direction head so the untrained wrapped-angle marginal is close
  // to uniform on the circle; unit sigma elsewhere.
  p.log_sigma << std::log(10.0), 0.0, 0.0, 0.0, 0.0;
  return p;
}

Eigen::VectorXd PolicyParams::flatten() const {
  Eigen::VectorXd theta(dim());
  int k = 0;
  for (int i = 0; i < kHeads; ++i) {
    for (int j = 0; j < kFeatureDim; ++j) theta(k++) = weights(i, j);
  }
  for (int i = 0; i < kHeads; ++i) theta(k++) = bias(i);
  for (int i = 0; i < kHeads; ++i) theta(k++) = log_sigma(i);
  return theta;
}

PolicyParams PolicyParams::unflatten(const Eigen::VectorXd& theta) {
  if (theta.size() != dim()) {
    throw Error(Errc::invalid_input, "parameter vector has the wrong size");
  }
  PolicyParams p;
  int k = 0;
  for (int i = 0; i < kHeads; ++i) {
    for (int j = 0; j < kFeatureDim; ++j) p.weights(i, j) = theta(k++);
  }
  for (int i = 0; i < kHeads; ++i) p.bias(i) = theta(k++);
  for (int i = 0; i < kHeads; ++i) p.log_sigma(i) = theta(k++);
  return p;
}

namespace {

// East/north tangent basis of the pitch/yaw parameterization.
void camera_basis(const SphereChart& chart, double pitch, double yaw,
                  Vec3* east, Vec3* north) {
  *east = Vec3(-std::sin(yaw), std::cos(yaw), 0.0);
  const Vec3 n =
      (camera_point(chart, pitch, yaw).position() - chart.center()) /
      chart.radius();
  *north = n.cross(*east);
}

double wrap_two_pi(double x) {
  const double two_pi = 2.0 * M_PI;
  double w = std::fmod(x, two_pi);
  if (w < 0.0) w += two_pi;
  return w;
}

}  // namespace

Eigen::Matrix<double, kFeatureDim, 1> featurize(const EnvConfig& cfg,
                                                const Observation& obs) {
  Eigen::Matrix<double, kFeatureDim, 1> x;
  const double pitch_half =
      std::max(0.5 * (cfg.camera.pitch_max - cfg.camera.pitch_min), 1e-9);
  const double yaw_half =
      std::max(0.5 * (cfg.camera.yaw_max - cfg.camera.yaw_min), 1e-9);
  x(0) = (obs.cam_pitch - 0.5 * (cfg.camera.pitch_min + cfg.camera.pitch_max)) /
         pitch_half;
  x(1) = (obs.cam_yaw - 0.5 * (cfg.camera.yaw_min + cfg.camera.yaw_max)) /
         yaw_half;
  for (int axis = 0; axis < 3; ++axis) {
    const double half =
        std::max(0.5 * (cfg.ee.box_max[axis] - cfg.ee.box_min[axis]), 1e-9);
    x(2 + axis) =
        (obs.ee[axis] - 0.5 * (cfg.ee.box_min[axis] + cfg.ee.box_max[axis])) /
        half;
  }
  x(5) = obs.a_rigid;
  x(6) = static_cast<double>(obs.n_ring) / cfg.bag.loop_vertices;

  // Bearing of the keypoint centroid from the camera, east/north components
  // in radians.
  x(7) = 0.0;
  x(8) = 0.0;
  if (!obs.keypoints.empty()) {
    Vec3 mean = Vec3::Zero();
    for (const Vec3& k : obs.keypoints) mean += k;
    mean /= static_cast<double>(obs.keypoints.size());
    const SphereChart chart = cfg.chart();
    if ((mean - chart.center()).norm() > 1e-9) {
      const SpherePoint target = chart.project(mean);
      const SpherePoint cam =
          camera_point(chart, obs.cam_pitch, obs.cam_yaw);
      if (geodesic_distance(cam, target) <
          M_PI * chart.radius() - 1e-6 * chart.radius()) {
        const TangentVector bearing = log_map(cam, target);
        Vec3 east, north;
        camera_basis(chart, obs.cam_pitch, obs.cam_yaw, &east, &north);
        x(7) = bearing.direction().dot(east) / chart.radius();
        x(8) = bearing.direction().dot(north) / chart.radius();
      }
    }
  }
  return x;
}

ActionPair visual_servoing_policy(const EnvConfig& cfg, const Observation& obs,
                                  int probe_directions) {
  const SphereChart chart = cfg.chart();
  const SpherePoint at = camera_point(chart, obs.cam_pitch, obs.cam_yaw);
  Vec3 east, north;
  camera_basis(chart, obs.cam_pitch, obs.cam_yaw, &east, &north);

  int best_count = obs.n_ring;
  Vec3 best_dir = Vec3::Zero();
  for (int k = 0; k < probe_directions; ++k) {
    const double a = 2.0 * M_PI * k / probe_directions;
    const Vec3 dir = std::cos(a) * east + std::sin(a) * north;
    const SpherePoint moved = exp_map(
        TangentVector(at, dir * (cfg.camera.step_max * chart.radius())));
    auto [pitch, yaw] = pitch_yaw_of(chart, moved.position());
    pitch = std::clamp(pitch, cfg.camera.pitch_min, cfg.camera.pitch_max);
    yaw = std::clamp(yaw, cfg.camera.yaw_min, cfg.camera.yaw_max);
    const int count = ring_count_at(cfg, obs.keypoints, pitch, yaw);
    if (count > best_count) {
      best_count = count;
      best_dir = dir;
    }
  }

  ActionPair action;
  if (best_count > obs.n_ring) {
    action.camera = CameraTangentStep{best_dir, cfg.camera.step_max};
  } else {
    action.camera = CameraPitchYawDelta{0.0, 0.0};  // greedy stationary
  }

  const Vec3 span = obs.ee - cfg.bag.fixed_handle;
  const double sep = span.norm();
  if (sep > 1e-12 && sep < cfg.bag.max_separation) {
    action.ee_displacement = span / sep * cfg.ee.step_max;
  }
  return action;
}

namespace {

struct EpisodeRunner {
  const EnvConfig& cfg;
  Method method;
  const PolicyParams& params;
  double omega;
  const RolloutOptions& opt;
  SphereChart chart;

  explicit EpisodeRunner(const EnvConfig& c, Method m, const PolicyParams& p,
                         double w, const RolloutOptions& o)
      : cfg(c), method(m), params(p), omega(w), opt(o), chart(c.chart()) {}

  RolloutRecord run(Environment& env, std::uint64_t seed) {
    RolloutRecord rec;
    Observation obs = env.reset(seed);
    std::mt19937_64 rng(mix_seed(seed, 7, 1));
    std::normal_distribution<double> normal(0.0, 1.0);
    double disc = 1.0;

    while (true) {
      const auto x = featurize(cfg, obs);
      const Eigen::Matrix<double, kHeads, 1> mean =
          params.weights * x + params.bias;

      ActionPair action;
      ConstraintStep cstep;
      bool have_cstep = false;

      if (method == Method::vs) {
        action = visual_servoing_policy(cfg, obs);
      } else if (method == Method::static_vision) {
        action.camera = CameraPitchYawDelta{0.0, 0.0};
        for (int i = 0; i < 3; ++i) {
          const double z = mean(2 + i) +
                           std::exp(params.log_sigma(2 + i)) * normal(rng);
          action.ee_displacement[i] = cfg.ee.step_max * std::tanh(z);
        }
      } else {
        const double z_dir =
            mean(0) + std::exp(params.log_sigma(0)) * normal(rng);
        const double z_step =
            mean(1) + std::exp(params.log_sigma(1)) * normal(rng);
        for (int i = 0; i < 3; ++i) {
          const double z = mean(2 + i) +
                           std::exp(params.log_sigma(2 + i)) * normal(rng);
          action.ee_displacement[i] = cfg.ee.step_max * std::tanh(z);
        }
        const double step_angle =
            cfg.camera.step_max * 0.5 * (1.0 + std::tanh(z_step));

        bool constrained = false;
        if (method == Method::davs) {
          try {
            SoiKeypointSet kps{obs.keypoints, obs.t};
            const SpherePoint p0 =
                camera_point(chart, obs.cam_pitch, obs.cam_yaw);
            const DavsManifold m = build_davs(kps, p0, chart, opt.davs_cfg);
            const TangentFrame frame = tangent_frame(m);
            const double u = 0.5 * (1.0 + std::tanh(z_dir));
            const TangentVector dir = sample_direction(frame, omega, u);
            action.camera = CameraTangentStep{dir.direction(), step_angle};
            const auto [lo, hi] = sampling_interval(frame, omega);
            cstep = ConstraintStep{lo, hi,
                                   cone_angle_of(frame, dir.direction()),
                                   false, true};
            have_cstep = true;
            constrained = true;
          } catch (const Error& e) {
            if (!is_degenerate_input(e.code()) &&
                e.code() != Errc::numerical_failure &&
                e.code() != Errc::non_convergence) {
              throw;
            }
            ++rec.fallback_steps;
            cstep = ConstraintStep{0.0, 0.0, 0.0, true, false};
            have_cstep = true;
          }
        }
        if (!constrained) {
          Vec3 east, north;
          camera_basis(chart, obs.cam_pitch, obs.cam_yaw, &east, &north);
          const double a = wrap_two_pi(z_dir);
          action.camera = CameraTangentStep{
              std::cos(a) * east + std::sin(a) * north, step_angle};
        }
      }

      const Observation before = obs;
      const StepResult result = env.step(action);
      obs = result.obs;

      rec.length += 1;
      rec.discounted_return += disc * result.reward;
      rec.undiscounted_return += result.reward;
      disc *= cfg.discount;
      if (opt.record_transitions) {
        rec.transitions.push_back(
            TransitionRecord{before, action, obs, result.reward});
      }
      if (opt.record_constraints && have_cstep) {
        rec.constraint_trace.push_back(cstep);
      }
      if (result.done) {
        rec.reason = result.reason;
        rec.success = result.reason == DoneReason::success;
        break;
      }
    }
    return rec;
  }
};

}  // namespace

RolloutRecord rollout(Environment& env, Method method,
                      const PolicyParams& params, double omega,
                      std::uint64_t seed, const RolloutOptions& opt) {
  if (omega < 0.0 || omega > 1.0) {
    throw Error(Errc::invalid_input, "omega must lie in [0, 1]");
  }
  EpisodeRunner runner(env.config(), method, params, omega, opt);
  return runner.run(env, seed);
}

RolloutRecord davs_rollout(Environment& env, const PolicyParams& params,
                           double omega, std::uint64_t seed,
                           const RolloutOptions& opt) {
  return rollout(env, Method::davs, params, omega, seed, opt);
}

RolloutRecord unconstrained_rollout(Environment& env,
                                    const PolicyParams& params,
                                    std::uint64_t seed,
                                    const RolloutOptions& opt) {
  return rollout(env, Method::no_davs, params, 1.0, seed, opt);
}

RolloutRecord static_vision_rollout(Environment& env,
                                    const PolicyParams& params,
                                    std::uint64_t seed,
                                    const RolloutOptions& opt) {
  return rollout(env, Method::static_vision, params, 1.0, seed, opt);
}

RolloutRecord visual_servoing_rollout(Environment& env, std::uint64_t seed,
                                      const RolloutOptions& opt) {
  return rollout(env, Method::vs, PolicyParams::defaults(), 1.0, seed, opt);
}

namespace {

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, jobs);
  if (jobs == 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  const int k = std::min(jobs, n);
  workers.reserve(static_cast<std::size_t>(k));
  for (int w = 0; w < k; ++w) {
    workers.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

void accumulate_constraints(ConstraintStats* stats,
                            const std::vector<ConstraintStep>& trace,
                            int total_steps) {
  stats->total_steps += total_steps;
  for (const ConstraintStep& c : trace) {
    if (c.fallback) {
      ++stats->fallback_steps;
      continue;
    }
    if (!c.constrained) continue;
    ++stats->constrained_steps;
    const double eps = 1e-9;
    const bool in_main = c.alpha >= c.cone_lo - eps && c.alpha <= c.cone_hi + eps;
    const double alt = c.alpha - 2.0 * M_PI;
    const bool in_alt = alt >= c.cone_lo - eps && alt <= c.cone_hi + eps;
    if (in_main || in_alt) ++stats->in_cone_steps;
  }
}

}  // namespace

CemResult cem_optimize(
    const Eigen::VectorXd& mu0, const CemConfig& cfg, std::uint64_t seed,
    const std::function<double(int, int, const Eigen::VectorXd&)>& eval,
    std::vector<std::array<double, 2>>* score_curve) {
  if (cfg.population < 2 || cfg.elites < 1 || cfg.elites > cfg.population) {
    throw Error(Errc::invalid_input, "bad CEM population/elite sizes");
  }
  const int dim = static_cast<int>(mu0.size());
  Eigen::VectorXd mu = mu0;
  Eigen::VectorXd sigma = Eigen::VectorXd::Constant(dim, cfg.init_stddev);

  std::mt19937_64 rng(mix_seed(seed, 11, 0));
  std::normal_distribution<double> normal(0.0, 1.0);

  CemResult out;
  out.best = mu0;
  out.best_score = -std::numeric_limits<double>::infinity();

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    // Sample the whole population on the main thread so parallel evaluation
    // cannot change the draws.
    std::vector<Eigen::VectorXd> pop(cfg.population);
    for (int c = 0; c < cfg.population; ++c) {
      pop[c] = mu;
      for (int d = 0; d < dim; ++d) pop[c](d) += sigma(d) * normal(rng);
    }

    std::vector<double> scores(cfg.population, 0.0);
    parallel_for(cfg.population, cfg.jobs,
                 [&](int c) { scores[c] = eval(iter, c, pop[c]); });
    for (double s : scores) {
      if (!std::isfinite(s)) {
        throw Error(Errc::numerical_failure,
                    "non-finite return during CEM search");
      }
    }

    std::vector<int> order(cfg.population);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&scores](int a, int b) {
      return scores[a] > scores[b];
    });

    if (scores[order[0]] > out.best_score) {
      out.best_score = scores[order[0]];
      out.best = pop[order[0]];
    }

    Eigen::VectorXd elite_mean = Eigen::VectorXd::Zero(dim);
    for (int e = 0; e < cfg.elites; ++e) elite_mean += pop[order[e]];
    elite_mean /= cfg.elites;
    Eigen::VectorXd elite_var = Eigen::VectorXd::Zero(dim);
    for (int e = 0; e < cfg.elites; ++e) {
      const Eigen::VectorXd d = pop[order[e]] - elite_mean;
      elite_var += d.cwiseProduct(d);
    }
    elite_var /= cfg.elites;

    mu = (1.0 - cfg.smoothing) * mu + cfg.smoothing * elite_mean;
    sigma = (1.0 - cfg.smoothing) * sigma +
            cfg.smoothing * elite_var.cwiseSqrt();
    sigma = sigma.cwiseMax(cfg.stddev_floor);

    if (score_curve) {
      double pop_mean = 0.0;
      for (double s : scores) pop_mean += s;
      pop_mean /= cfg.population;
      double elite_score = 0.0;
      for (int e = 0; e < cfg.elites; ++e) elite_score += scores[order[e]];
      elite_score /= cfg.elites;
      score_curve->push_back({pop_mean, elite_score});
    }
  }
  out.final_mean = mu;
  return out;
}

TrainResult train(const EnvConfig& env_cfg, Method method, double omega,
                  const CemConfig& cem, std::uint64_t seed,
                  bool record_trace) {
  if (method == Method::vs) {
    throw Error(Errc::invalid_input, "visual servoing has no parameters");
  }
  env_cfg.validate();

  struct Slot {
    double length_sum = 0.0;
    double return_sum = 0.0;
    int successes = 0;
    int episodes = 0;
    int steps = 0;
    std::vector<ConstraintStep> trace;
  };
  std::vector<std::vector<Slot>> slots(
      cem.iterations, std::vector<Slot>(cem.population));

  RolloutOptions opt;
  opt.record_constraints = true;

  const auto run_candidate = [&](int iter, int cand,
                                 const Eigen::VectorXd& theta) {
    const PolicyParams params = PolicyParams::unflatten(theta);
    Slot& slot = slots[iter][cand];
    double total = 0.0;
    for (int ep = 0; ep < cem.episodes_per_candidate; ++ep) {
      // Common random numbers: every candidate sees the same episode seeds.
      const std::uint64_t ep_seed =
          mix_seed(seed, 1, static_cast<std::uint64_t>(iter) * 1024 + ep);
      Environment env(env_cfg);
      RolloutRecord rec = rollout(env, method, params, omega, ep_seed, opt);
      total += rec.discounted_return;
      slot.length_sum += rec.length;
      slot.return_sum += rec.discounted_return;
      slot.successes += rec.success ? 1 : 0;
      slot.episodes += 1;
      slot.steps += rec.length;
      slot.trace.insert(slot.trace.end(), rec.constraint_trace.begin(),
                        rec.constraint_trace.end());
    }
    return total / cem.episodes_per_candidate;
  };

  std::vector<std::array<double, 2>> score_curve;
  const CemResult res = cem_optimize(PolicyParams::defaults().flatten(), cem,
                                     seed, run_candidate, &score_curve);

  TrainResult out;
  out.curve.reserve(cem.iterations);
  for (int iter = 0; iter < cem.iterations; ++iter) {
    CurvePoint pt;
    pt.iteration = iter;
    double len = 0.0, ret = 0.0;
    int succ = 0, eps = 0;
    for (const Slot& s : slots[iter]) {
      len += s.length_sum;
      ret += s.return_sum;
      succ += s.successes;
      eps += s.episodes;
    }
    pt.mean_length = eps > 0 ? len / eps : 0.0;
    pt.mean_return = eps > 0 ? ret / eps : 0.0;
    pt.success_pct = eps > 0 ? 100.0 * succ / eps : 0.0;
    pt.elite_mean_return = score_curve[iter][1];
    out.curve.push_back(pt);
  }
  for (const auto& iter_slots : slots) {
    for (const Slot& s : iter_slots) {
      accumulate_constraints(&out.constraints, s.trace, s.steps);
      if (record_trace) {
        out.full_trace.insert(out.full_trace.end(), s.trace.begin(),
                              s.trace.end());
      }
    }
  }

  // Pick the better of the final distribution mean and the best candidate on
  // a fresh evaluation batch.
  const auto score_params = [&](const Eigen::VectorXd& theta) {
    const PolicyParams params = PolicyParams::unflatten(theta);
    double total = 0.0;
    const int n_eval = 10;
    for (int ep = 0; ep < n_eval; ++ep) {
      Environment env(env_cfg);
      RolloutRecord rec = rollout(env, method, params, omega,
                                  mix_seed(seed, 2, ep), opt);
      total += rec.discounted_return;
      accumulate_constraints(&out.constraints, rec.constraint_trace,
                             rec.length);
      if (record_trace) {
        out.full_trace.insert(out.full_trace.end(),
                              rec.constraint_trace.begin(),
                              rec.constraint_trace.end());
      }
    }
    return total / n_eval;
  };
  const double mean_score = score_params(res.final_mean);
  const double best_score = score_params(res.best);
  if (best_score >= mean_score) {
    out.params = PolicyParams::unflatten(res.best);
    out.best_score = best_score;
  } else {
    out.params = PolicyParams::unflatten(res.final_mean);
    out.best_score = mean_score;
  }
  return out;
}

EvalMetrics metrics_from_records(const EnvConfig& cfg,
                                 const std::vector<RolloutRecord>& records) {
  (void)cfg;
  EvalMetrics m;
  m.episodes = static_cast<int>(records.size());
  if (records.empty()) return m;
  double len = 0.0, ret = 0.0;
  int succ = 0;
  for (const RolloutRecord& r : records) {
    len += r.length;
    ret += r.discounted_return;
    succ += r.success ? 1 : 0;
  }
  m.mean_length = len / m.episodes;
  m.mean_return = ret / m.episodes;
  m.success_pct = 100.0 * succ / m.episodes;
  return m;
}

EvalMetrics evaluate(const EnvConfig& env_cfg, Method method,
                     const PolicyParams& params, double omega,
                     const std::vector<std::uint64_t>& seeds, int jobs,
                     std::vector<RolloutRecord>* records,
                     const RolloutOptions& opt) {
  if (seeds.empty()) {
    throw Error(Errc::invalid_input, "evaluation needs at least one seed");
  }
  env_cfg.validate();
  RolloutOptions local = opt;
  local.record_constraints = true;

  std::vector<RolloutRecord> all(seeds.size());
  parallel_for(static_cast<int>(seeds.size()), jobs, [&](int i) {
    Environment env(env_cfg);
    all[static_cast<std::size_t>(i)] =
        rollout(env, method, params, omega, seeds[static_cast<std::size_t>(i)],
                local);
  });

  EvalMetrics m = metrics_from_records(env_cfg, all);
  for (const RolloutRecord& r : all) {
    accumulate_constraints(&m.constraints, r.constraint_trace, r.length);
  }
  if (records) *records = std::move(all);
  return m;
}

}  // namespace davs
