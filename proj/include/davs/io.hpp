#pragma once

// JSON import/export for keypoint sets, manifolds, environment configs and
// policy parameters, plus the JSONL episode log format. Lengths are meters,
// angles radians; 3-vectors serialize as arrays of 3 numbers.

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "davs/env.hpp"
#include "davs/manifold.hpp"
#include "davs/policy.hpp"

namespace davs {

using Json = nlohmann::json;

Json keypoints_to_json(const SoiKeypointSet& kps);
SoiKeypointSet keypoints_from_json(const Json& j);

Json manifold_to_json(const DavsManifold& m);
DavsManifold manifold_from_json(const Json& j);

// Environment config: every key optional (defaults apply), unknown keys
// rejected with a diagnostic naming the key.
Json env_config_to_json(const EnvConfig& cfg);
EnvConfig env_config_from_json(const Json& j);

Json params_to_json(const PolicyParams& params, const std::string& cfg_hash);
PolicyParams params_from_json(const Json& j);

// FNV-1a over the canonical dump; stamped into parameter files.
std::string config_hash(const Json& j);

// One JSONL record per step: t, camera pitch/yaw at 9 significant digits,
// end-effector position, visibility, reward, done flag and reason.
std::string episode_log_line(int t, const Observation& obs, double reward,
                             bool done, DoneReason reason);

void write_episode_jsonl(std::ostream& out, const RolloutRecord& rec);

struct EpisodeLogRecord {
  int t = 0;
  double pitch = 0.0;
  double yaw = 0.0;
  Vec3 ee = Vec3::Zero();
  double a_rigid = 0.0;
  int n_ring = 0;
  double reward = 0.0;
  bool done = false;
  std::string done_reason;
};

std::vector<EpisodeLogRecord> read_episode_jsonl(std::istream& in);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace davs
