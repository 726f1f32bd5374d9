#pragma once

// Deterministic kinematic proxy for the CubeBagClean / CubeBagObst tasks.
// A bag opening is modeled as an ellipse loop whose near handle tracks the
// end-effector; a cube sits on the floor under the loop; an active camera
// rides a hemisphere chart and stares at the viewpoint centroid. Visibility
// of the cube through the loop polygon and of the loop vertices in the
// camera frustum drive a potential-based reward with a timed success bonus.
//
// All randomness flows from the seed passed to reset; stepping is pure.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "davs/geometry.hpp"

namespace davs {

enum class BirthMode { fixed, random };
enum class DoneReason { none, success, timeout, overstretch };

const char* done_reason_name(DoneReason r);

struct ObstacleDisk {
  Vec3 center = Vec3::Zero();  // horizontal circular occluder
  double radius = 0.0;
};

struct CameraConfig {
  double pitch_min = -1.5533430342749532;  // -89 deg
  double pitch_max = -0.5235987755982988;  // -30 deg
  double yaw_min = 0.7853981633974483;     // 45 deg
  double yaw_max = 2.356194490192345;      // 135 deg
  double step_max = 0.03;                  // radians per step
  double fov_half = 0.7853981633974483;    // 45 deg half angle
  BirthMode birth_mode = BirthMode::fixed;
  double birth_pitch = -0.5410520681182421;  // -31 deg
  double birth_yaw = 0.8203047484370065;     // 47 deg
};

struct EndEffectorConfig {
  Vec3 box_min = Vec3(0.00, 0.06, 0.31);
  Vec3 box_max = Vec3(0.32, 0.14, 0.41);
  double step_max = 0.02;  // meters per step, Euclidean clamp
  BirthMode birth_mode = BirthMode::fixed;
  Vec3 birth_position = Vec3(0.04, 0.10, 0.36);
};

struct BagConfig {
  Vec3 fixed_handle = Vec3(-0.16, 0.10, 0.36);
  double rest_separation = 0.16;        // aperture zero here
  double max_separation = 0.24;         // aperture saturates here
  double overstretch_separation = 0.49; // episode-ending failure beyond this
  double max_aperture = 0.048;           // semi-minor axis at saturation
  int loop_vertices = 12;
  double tilt_gain = 0.15;  // loop normal tilt toward the chart center
};

struct CubeConfig {
  double half_extent = 0.022;
  double spawn_radius = 0.12;  // seeded jitter around the spawn center
  // Spawn center offset from the birth loop center; the bag floor bulges
  // away from the camera-facing side, so cubes settle south of the rim.
  Vec3 spawn_offset = Vec3(0.0, -0.05, 0.0);
  double base_height = 0.022;   // cube center height (floor at z = 0)
};

struct EnvConfig {
  Vec3 chart_center = Vec3::Zero();
  double chart_radius = 1.0;
  int t_max = 200;
  double discount = 0.99;
  double lambda_r_ref = 10.0;
  double lambda_d = 1.0;
  // Scale compensation: lambda_r = lambda_r_ref * (d(cam, cube)/d_ref)^2 with
  // d_ref = chart_radius. Disable to freeze lambda_r at lambda_r_ref.
  bool lambda_r_scale_compensation = true;
  double tau_rigid = 0.5;
  double tau_ring = 0.8;
  CameraConfig camera;
  EndEffectorConfig ee;
  BagConfig bag;
  CubeConfig cube;
  std::optional<ObstacleDisk> obstacle;
  std::uint64_t seed = 0;

  SphereChart chart() const {
    return SphereChart(chart_center, chart_radius, true);
  }
  void validate() const;  // throws infeasible_config
};

// Built-in scenario presets. "clean" is the defaults; "obstacle" adds the
// occluding disk over the centroid-pursuit corridor and spawns the
// end-effector randomly.
EnvConfig scenario_defaults(const std::string& scenario);

struct EnvState {
  int t = 0;
  double cam_pitch = 0.0;
  double cam_yaw = 0.0;
  Vec3 ee = Vec3::Zero();
  std::vector<Vec3> loop;
  Vec3 cube_center = Vec3::Zero();
  double cube_half = 0.0;
  double separation = 0.0;
  double aperture = 0.0;
  // Visibility at this state; previous-step values for the next delta.
  double a_rigid = 0.0;
  int n_ring = 0;
  bool terminated = false;
  bool overstretched = false;
  DoneReason done_reason = DoneReason::none;
};

struct Observation {
  Vec3 ee = Vec3::Zero();
  std::vector<Vec3> keypoints;  // analytic SOI: the loop vertices
  double a_rigid = 0.0;
  int n_ring = 0;
  double cam_pitch = 0.0;
  double cam_yaw = 0.0;
  std::int64_t t = 0;
};

// Camera sub-action: either a tangent direction with an angular step size or
// an absolute pitch/yaw delta (baselines). Step sizes are clamped.
struct CameraTangentStep {
  Vec3 direction = Vec3::Zero();  // unit tangent at the current camera point
  double angle = 0.0;             // radians
};
struct CameraPitchYawDelta {
  double dpitch = 0.0;
  double dyaw = 0.0;
};
using CameraAction = std::variant<CameraTangentStep, CameraPitchYawDelta>;

struct ActionPair {
  CameraAction camera = CameraPitchYawDelta{};
  Vec3 ee_displacement = Vec3::Zero();
};

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
  DoneReason reason = DoneReason::none;
};

struct BagUpdate {
  std::vector<Vec3> loop;
  double separation = 0.0;
  double aperture = 0.0;
  bool overstretched = false;
};

// --- pose helpers ---

// Pitch is negative above the horizon (elevation = -pitch); yaw is the
// azimuth. The camera always gazes at the chart center.
SpherePoint camera_point(const SphereChart& chart, double pitch, double yaw);
std::pair<double, double> pitch_yaw_of(const SphereChart& chart,
                                       const Vec3& position);

// --- operations ---

std::pair<EnvState, Observation> env_reset(const EnvConfig& cfg,
                                           std::uint64_t seed);

// Loop vertices for the end-effector at state.ee + displacement (displacement
// norm-clamped, position box-clamped).
BagUpdate bag_kinematics(const EnvConfig& cfg, const EnvState& state,
                         const Vec3& ee_displacement);

// Fraction of a deterministic 128-point cube-surface sample set whose segment
// to the camera passes through the loop polygon interior, unblocked by the
// obstacle. Zero when the loop has no interior.
double visibility_rigid(const EnvConfig& cfg, const EnvState& state);

// Loop vertices inside the frustum cone around the gaze axis, unblocked.
int visible_ring_count(const EnvConfig& cfg, const EnvState& state);

// Same count from an arbitrary camera pose; used for servoing probes.
int ring_count_at(const EnvConfig& cfg, const std::vector<Vec3>& keypoints,
                  double pitch, double yaw);

bool success_indicator(const EnvConfig& cfg, double a_rigid, int n_ring,
                       int t);

// Eq-style potential-shaped reward with timed success bonus 100*(T_max - t).
double reward(const EnvConfig& cfg, const EnvState& prev, const EnvState& cur);

std::pair<EnvState, StepResult> env_step(const EnvConfig& cfg,
                                         const EnvState& state,
                                         const ActionPair& action);

Observation observe(const EnvState& state);

// Stateful convenience wrapper used by rollouts and the CLI.
class Environment {
 public:
  explicit Environment(EnvConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
  }

  const EnvConfig& config() const { return cfg_; }
  const EnvState& state() const;
  bool has_state() const { return has_state_; }

  Observation reset(std::uint64_t seed);
  StepResult step(const ActionPair& action);

 private:
  EnvConfig cfg_;
  EnvState state_;
  bool has_state_ = false;
};

}  // namespace davs
