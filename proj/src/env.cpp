#include "davs/env.hpp"

#include <algorithm>
#include <cmath>

namespace davs {

const char* done_reason_name(DoneReason r) {
  switch (r) {
    case DoneReason::none: return "none";
    case DoneReason::success: return "success";
    case DoneReason::timeout: return "timeout";
    case DoneReason::overstretch: return "overstretch";
  }
  return "unknown";
}

void EnvConfig::validate() const {
  if (t_max < 1) throw Error(Errc::infeasible_config, "t_max must be >= 1");
  if (!(discount >= 0.0 && discount < 1.0)) {
    throw Error(Errc::infeasible_config, "discount must lie in [0, 1)");
  }
  if (!(tau_rigid > 0.0 && tau_rigid <= 1.0) ||
      !(tau_ring > 0.0 && tau_ring <= 1.0)) {
    throw Error(Errc::infeasible_config, "thresholds must lie in (0, 1]");
  }
  if (!(camera.pitch_min <= camera.pitch_max) ||
      !(camera.yaw_min <= camera.yaw_max)) {
    throw Error(Errc::infeasible_config, "camera limits out of order");
  }
  if (!(camera.step_max > 0.0) || !(ee.step_max > 0.0)) {
    throw Error(Errc::infeasible_config, "step maxima must be positive");
  }
  if (camera.birth_mode == BirthMode::fixed &&
      (camera.birth_pitch < camera.pitch_min ||
       camera.birth_pitch > camera.pitch_max ||
       camera.birth_yaw < camera.yaw_min ||
       camera.birth_yaw > camera.yaw_max)) {
    throw Error(Errc::infeasible_config, "fixed camera birth pose outside limits");
  }
  if ((ee.box_min.array() > ee.box_max.array()).any()) {
    throw Error(Errc::infeasible_config, "end-effector box out of order");
  }
  if (ee.birth_mode == BirthMode::fixed &&
      ((ee.birth_position.array() < ee.box_min.array()).any() ||
       (ee.birth_position.array() > ee.box_max.array()).any())) {
    throw Error(Errc::infeasible_config, "fixed end-effector birth outside box");
  }
  if (bag.loop_vertices < 8) {
    throw Error(Errc::infeasible_config, "bag loop needs >= 8 vertices");
  }
  if (!(bag.rest_separation > 0.0) ||
      !(bag.max_separation > bag.rest_separation) ||
      !(bag.overstretch_separation >= bag.max_separation)) {
    throw Error(Errc::infeasible_config, "bag separations out of order");
  }
  if (!(bag.max_aperture > 0.0)) {
    throw Error(Errc::infeasible_config, "bag max aperture must be positive");
  }
  if (!(cube.half_extent > 0.0)) {
    throw Error(Errc::infeasible_config, "cube half extent must be positive");
  }
  if (obstacle && !(obstacle->radius > 0.0)) {
    throw Error(Errc::infeasible_config, "obstacle radius must be positive");
  }
  if (!(chart_radius > 0.0)) {
    throw Error(Errc::infeasible_config, "chart radius must be positive");
  }
}

EnvConfig scenario_defaults(const std::string& scenario) {
  EnvConfig cfg;
  if (scenario == "clean") {
    return cfg;
  }
  if (scenario == "obstacle") {
    cfg.obstacle = ObstacleDisk{Vec3(-0.04, 0.14, 0.55), 0.10};
    cfg.ee.birth_mode = BirthMode::random;
    return cfg;
  }
  throw Error(Errc::config_error,
              "unknown scenario '" + scenario + "' (expected clean|obstacle)");
}

SpherePoint camera_point(const SphereChart& chart, double pitch, double yaw) {
  const double el = -pitch;
  const Vec3 u(std::cos(el) * std::cos(yaw), std::cos(el) * std::sin(yaw),
               std::sin(el));
  return chart.project(chart.center() + u * chart.radius());
}

std::pair<double, double> pitch_yaw_of(const SphereChart& chart,
                                       const Vec3& position) {
  const Vec3 u = (position - chart.center()) / chart.radius();
  const double el = std::asin(std::clamp(u.z(), -1.0, 1.0));
  const double yaw = std::atan2(u.y(), u.x());
  return {-el, yaw};
}

namespace {

Vec3 clamp_to_box(const Vec3& x, const Vec3& lo, const Vec3& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

BagUpdate bag_update_for(const EnvConfig& cfg, const Vec3& ee) {
  const BagConfig& bag = cfg.bag;
  BagUpdate out;
  const Vec3 span = ee - bag.fixed_handle;
  out.separation = span.norm();
  out.overstretched = out.separation > bag.overstretch_separation;

  const double frac = std::clamp(
      (out.separation - bag.rest_separation) /
          (bag.max_separation - bag.rest_separation),
      0.0, 1.0);
  out.aperture = bag.max_aperture * frac;

  const Vec3 center = 0.5 * (bag.fixed_handle + ee);
  Vec3 normal = Vec3::UnitZ();
  const Vec3 toward = cfg.chart_center - center;
  if (toward.norm() > 1e-9) {
    normal = ((1.0 - bag.tilt_gain) * Vec3::UnitZ() +
              bag.tilt_gain * toward.normalized())
                 .normalized();
  }
  Vec3 major = span;
  if (out.separation > 1e-12) major /= out.separation;
  Vec3 major_in_plane = major - major.dot(normal) * normal;
  if (major_in_plane.norm() < 1e-9) major_in_plane = any_orthonormal(normal);
  major_in_plane.normalize();
  const Vec3 minor = normal.cross(major_in_plane);

  const int n = bag.loop_vertices;
  out.loop.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = 2.0 * M_PI * static_cast<double>(i) / n;
    out.loop.push_back(center + 0.5 * out.separation * std::cos(t) *
                                    major_in_plane +
                       out.aperture * std::sin(t) * minor);
  }
  return out;
}

bool blocked_by_obstacle(const EnvConfig& cfg, const Vec3& from,
                         const Vec3& to) {
  if (!cfg.obstacle) return false;
  const ObstacleDisk& disk = *cfg.obstacle;
  const double dz = to.z() - from.z();
  if (std::abs(dz) < 1e-15) return false;
  const double t = (disk.center.z() - from.z()) / dz;
  if (t <= 0.0 || t >= 1.0) return false;
  const Vec3 q = from + t * (to - from);
  const double dx = q.x() - disk.center.x();
  const double dy = q.y() - disk.center.y();
  return dx * dx + dy * dy <= disk.radius * disk.radius;
}

// 128 deterministic cube-surface samples: a Fibonacci sphere radially mapped
// onto the cube. Evenly spread over all faces.
std::vector<Vec3> cube_surface_samples(const Vec3& center, double half) {
  constexpr int kCount = 128;
  std::vector<Vec3> out;
  out.reserve(kCount);
  const double golden = M_PI * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < kCount; ++i) {
    const double z = 1.0 - 2.0 * (i + 0.5) / kCount;
    const double rho = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * i;
    Vec3 u(rho * std::cos(phi), rho * std::sin(phi), z);
    const double m =
        std::max({std::abs(u.x()), std::abs(u.y()), std::abs(u.z())});
    out.push_back(center + u * (half / m));
  }
  return out;
}

struct LoopPlane {
  Vec3 centroid;
  Vec3 normal;  // zero when the loop has no interior
  Vec3 e1, e2;
  std::vector<Eigen::Vector2d> poly;
  bool valid = false;
};

LoopPlane loop_plane(const std::vector<Vec3>& loop) {
  LoopPlane lp;
  lp.centroid = Vec3::Zero();
  for (const Vec3& v : loop) lp.centroid += v;
  lp.centroid /= static_cast<double>(loop.size());

  // Newell's method: |sum| ~ 2 * enclosed area.
  Vec3 n = Vec3::Zero();
  for (std::size_t i = 0; i < loop.size(); ++i) {
    const Vec3 a = loop[i] - lp.centroid;
    const Vec3 b = loop[(i + 1) % loop.size()] - lp.centroid;
    n += a.cross(b);
  }
  if (n.norm() < 1e-12) return lp;  // flat loop, no interior
  lp.normal = n.normalized();
  lp.e1 = any_orthonormal(lp.normal);
  lp.e2 = lp.normal.cross(lp.e1);
  lp.poly.reserve(loop.size());
  for (const Vec3& v : loop) {
    const Vec3 d = v - lp.centroid;
    lp.poly.emplace_back(d.dot(lp.e1), d.dot(lp.e2));
  }
  lp.valid = true;
  return lp;
}

bool point_in_polygon(const std::vector<Eigen::Vector2d>& poly,
                      const Eigen::Vector2d& q) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const auto& a = poly[i];
    const auto& b = poly[j];
    if ((a.y() > q.y()) != (b.y() > q.y()) &&
        q.x() < (b.x() - a.x()) * (q.y() - a.y()) / (b.y() - a.y()) + a.x()) {
      inside = !inside;
    }
  }
  return inside;
}

}  // namespace

BagUpdate bag_kinematics(const EnvConfig& cfg, const EnvState& state,
                         const Vec3& ee_displacement) {
  Vec3 disp = ee_displacement;
  const double n = disp.norm();
  if (n > cfg.ee.step_max) disp *= cfg.ee.step_max / n;
  const Vec3 ee =
      clamp_to_box(state.ee + disp, cfg.ee.box_min, cfg.ee.box_max);
  return bag_update_for(cfg, ee);
}

double visibility_rigid(const EnvConfig& cfg, const EnvState& state) {
  const LoopPlane lp = loop_plane(state.loop);
  if (!lp.valid) return 0.0;

  const SphereChart chart = cfg.chart();
  const Vec3 cam =
      camera_point(chart, state.cam_pitch, state.cam_yaw).position();
  const auto samples = cube_surface_samples(state.cube_center, state.cube_half);

  int visible = 0;
  for (const Vec3& x : samples) {
    const Vec3 seg = cam - x;
    const double denom = seg.dot(lp.normal);
    if (std::abs(denom) < 1e-15) continue;
    const double t = (lp.centroid - x).dot(lp.normal) / denom;
    if (t <= 0.0 || t >= 1.0) continue;
    const Vec3 q = x + t * seg - lp.centroid;
    if (!point_in_polygon(lp.poly, {q.dot(lp.e1), q.dot(lp.e2)})) continue;
    if (blocked_by_obstacle(cfg, x, cam)) continue;
    ++visible;
  }
  return static_cast<double>(visible) / static_cast<double>(samples.size());
}

int ring_count_at(const EnvConfig& cfg, const std::vector<Vec3>& keypoints,
                  double pitch, double yaw) {
  const SphereChart chart = cfg.chart();
  const Vec3 cam = camera_point(chart, pitch, yaw).position();
  const Vec3 gaze = (cfg.chart_center - cam).normalized();
  const double cos_fov = std::cos(cfg.camera.fov_half);

  int count = 0;
  for (const Vec3& v : keypoints) {
    const Vec3 d = v - cam;
    const double dn = d.norm();
    if (dn < 1e-12) {
      ++count;
      continue;
    }
    if (d.dot(gaze) / dn < cos_fov) continue;
    if (blocked_by_obstacle(cfg, v, cam)) continue;
    ++count;
  }
  return count;
}

int visible_ring_count(const EnvConfig& cfg, const EnvState& state) {
  return ring_count_at(cfg, state.loop, state.cam_pitch, state.cam_yaw);
}

bool success_indicator(const EnvConfig& cfg, double a_rigid, int n_ring,
                       int t) {
  const double ring_fraction =
      static_cast<double>(n_ring) / static_cast<double>(cfg.bag.loop_vertices);
  return a_rigid >= cfg.tau_rigid && ring_fraction >= cfg.tau_ring &&
         t < cfg.t_max;
}

double reward(const EnvConfig& cfg, const EnvState& prev,
              const EnvState& cur) {
  double lambda_r = cfg.lambda_r_ref;
  if (cfg.lambda_r_scale_compensation) {
    const SphereChart chart = cfg.chart();
    const Vec3 cam =
        camera_point(chart, cur.cam_pitch, cur.cam_yaw).position();
    const double d = (cam - cur.cube_center).norm();
    const double ratio = d / cfg.chart_radius;
    lambda_r *= ratio * ratio;
  }
  const double d_rigid = cur.a_rigid - prev.a_rigid;
  const double d_ring = static_cast<double>(cur.n_ring - prev.n_ring);
  double r = lambda_r * d_rigid + cfg.lambda_d * d_ring;
  if (success_indicator(cfg, cur.a_rigid, cur.n_ring, cur.t)) {
    r += 100.0 * static_cast<double>(cfg.t_max - cur.t);
  }
  return r;
}

Observation observe(const EnvState& state) {
  Observation obs;
  obs.ee = state.ee;
  obs.keypoints = state.loop;
  obs.a_rigid = state.a_rigid;
  obs.n_ring = state.n_ring;
  obs.cam_pitch = state.cam_pitch;
  obs.cam_yaw = state.cam_yaw;
  obs.t = state.t;
  return obs;
}

std::pair<EnvState, Observation> env_reset(const EnvConfig& cfg,
                                           std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);

  EnvState s;
  s.t = 0;
  if (cfg.camera.birth_mode == BirthMode::fixed) {
    s.cam_pitch = cfg.camera.birth_pitch;
    s.cam_yaw = cfg.camera.birth_yaw;
  } else {
    s.cam_pitch = std::uniform_real_distribution<double>(
        cfg.camera.pitch_min, cfg.camera.pitch_max)(rng);
    s.cam_yaw = std::uniform_real_distribution<double>(
        cfg.camera.yaw_min, cfg.camera.yaw_max)(rng);
  }
  if (cfg.ee.birth_mode == BirthMode::fixed) {
    s.ee = cfg.ee.birth_position;
  } else {
    for (int axis = 0; axis < 3; ++axis) {
      s.ee[axis] = std::uniform_real_distribution<double>(
          cfg.ee.box_min[axis], cfg.ee.box_max[axis])(rng);
    }
  }

  BagUpdate bag = bag_update_for(cfg, s.ee);
  s.loop = std::move(bag.loop);
  s.separation = bag.separation;
  s.aperture = bag.aperture;
  s.overstretched = bag.overstretched;

  // Cube lands under the birth loop center with seeded jitter.
  const Vec3 lc =
      0.5 * (cfg.bag.fixed_handle + s.ee) + cfg.cube.spawn_offset;
  const double u1 = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double u2 = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  const double rad = cfg.cube.spawn_radius * std::sqrt(u1);
  const double ang = 2.0 * M_PI * u2;
  s.cube_center = Vec3(lc.x() + rad * std::cos(ang),
                       lc.y() + rad * std::sin(ang), cfg.cube.base_height);
  s.cube_half = cfg.cube.half_extent;

  s.a_rigid = visibility_rigid(cfg, s);
  s.n_ring = visible_ring_count(cfg, s);
  return {s, observe(s)};
}

std::pair<EnvState, StepResult> env_step(const EnvConfig& cfg,
                                         const EnvState& state,
                                         const ActionPair& action) {
  if (state.terminated) {
    throw Error(Errc::invalid_transition, "episode already terminated");
  }
  const SphereChart chart = cfg.chart();

  EnvState next = state;
  next.t = state.t + 1;

  // Camera motion, clamped to the pitch/yaw limits (which also keeps the
  // pose on the hemisphere).
  if (std::holds_alternative<CameraTangentStep>(action.camera)) {
    const auto& cam = std::get<CameraTangentStep>(action.camera);
    const double angle =
        std::clamp(cam.angle, 0.0, cfg.camera.step_max);
    if (angle > 0.0 && cam.direction.norm() > 1e-12) {
      const SpherePoint at =
          camera_point(chart, state.cam_pitch, state.cam_yaw);
      // Project out numeric drift before building the tangent vector.
      Vec3 dir = cam.direction;
      const Vec3 n = at.unit();
      dir -= dir.dot(n) * n;
      if (dir.norm() > 1e-12) {
        dir.normalize();
        const SpherePoint moved = exp_map(
            TangentVector(at, dir * (angle * chart.radius())));
        auto [pitch, yaw] = pitch_yaw_of(chart, moved.position());
        next.cam_pitch = pitch;
        next.cam_yaw = yaw;
      }
    }
  } else {
    const auto& d = std::get<CameraPitchYawDelta>(action.camera);
    next.cam_pitch = state.cam_pitch +
                     std::clamp(d.dpitch, -cfg.camera.step_max,
                                cfg.camera.step_max);
    next.cam_yaw = state.cam_yaw +
                   std::clamp(d.dyaw, -cfg.camera.step_max,
                              cfg.camera.step_max);
  }
  next.cam_pitch =
      std::clamp(next.cam_pitch, cfg.camera.pitch_min, cfg.camera.pitch_max);
  next.cam_yaw =
      std::clamp(next.cam_yaw, cfg.camera.yaw_min, cfg.camera.yaw_max);

  // End-effector and bag.
  BagUpdate bag = bag_kinematics(cfg, state, action.ee_displacement);
  Vec3 disp = action.ee_displacement;
  const double dn = disp.norm();
  if (dn > cfg.ee.step_max) disp *= cfg.ee.step_max / dn;
  next.ee = clamp_to_box(state.ee + disp, cfg.ee.box_min, cfg.ee.box_max);
  next.loop = std::move(bag.loop);
  next.separation = bag.separation;
  next.aperture = bag.aperture;
  next.overstretched = bag.overstretched;

  next.a_rigid = visibility_rigid(cfg, next);
  next.n_ring = visible_ring_count(cfg, next);

  const double r = reward(cfg, state, next);

  StepResult result;
  result.reward = r;
  if (success_indicator(cfg, next.a_rigid, next.n_ring, next.t)) {
    result.done = true;
    result.reason = DoneReason::success;
  } else if (next.overstretched) {
    result.done = true;
    result.reason = DoneReason::overstretch;
  } else if (next.t >= cfg.t_max) {
    result.done = true;
    result.reason = DoneReason::timeout;
  }
  next.terminated = result.done;
  next.done_reason = result.reason;
  result.obs = observe(next);
  return {next, result};
}

const EnvState& Environment::state() const {
  if (!has_state_) {
    throw Error(Errc::invalid_transition, "environment was never reset");
  }
  return state_;
}

Observation Environment::reset(std::uint64_t seed) {
  auto [s, obs] = env_reset(cfg_, seed);
  state_ = std::move(s);
  has_state_ = true;
  return obs;
}

StepResult Environment::step(const ActionPair& action) {
  if (!has_state_) {
    throw Error(Errc::invalid_transition, "environment was never reset");
  }
  auto [s, result] = env_step(cfg_, state_, action);
  state_ = std::move(s);
  return result;
}

}  // namespace davs
