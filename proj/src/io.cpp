#include "davs/io.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace davs {

namespace {

Json vec_to_json(const Vec3& v) { return Json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from_json(const Json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(Errc::config_error, where + " must be an array of 3 numbers");
  }
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

void reject_unknown_keys(const Json& j, const std::set<std::string>& allowed,
                         const std::string& where) {
  if (!j.is_object()) {
    throw Error(Errc::config_error, where + " must be a JSON object");
  }
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw Error(Errc::config_error,
                  "unknown key '" + item.key() + "' in " + where);
    }
  }
}

Json path_to_json(const GeodesicPath& path) {
  Json samples = Json::array();
  for (const SpherePoint& s : path.samples()) {
    samples.push_back(vec_to_json(s.position()));
  }
  return Json{{"arc_length", path.arc_length()}, {"samples", samples}};
}

GeodesicPath path_from_json(const Json& j, const SphereChart& chart) {
  std::vector<SpherePoint> samples;
  for (const Json& s : j.at("samples")) {
    samples.push_back(chart.point(vec_from_json(s, "path sample")));
  }
  return GeodesicPath::from_samples(std::move(samples));
}

Json chart_to_json(const SphereChart& chart) {
  return Json{{"center", vec_to_json(chart.center())},
              {"hemisphere", chart.hemisphere()},
              {"radius", chart.radius()}};
}

SphereChart chart_from_json(const Json& j) {
  return SphereChart(vec_from_json(j.at("center"), "chart center"),
                     j.at("radius").get<double>(),
                     j.value("hemisphere", false));
}

}  // namespace

Json keypoints_to_json(const SoiKeypointSet& kps) {
  Json pts = Json::array();
  for (const Vec3& k : kps.keypoints) pts.push_back(vec_to_json(k));
  return Json{{"keypoints", pts}, {"timestamp", kps.timestamp}};
}

SoiKeypointSet keypoints_from_json(const Json& j) {
  reject_unknown_keys(j, {"keypoints", "timestamp"}, "keypoint set");
  SoiKeypointSet kps;
  if (!j.contains("keypoints") || !j.at("keypoints").is_array()) {
    throw Error(Errc::config_error, "keypoint set needs a 'keypoints' array");
  }
  for (const Json& p : j.at("keypoints")) {
    kps.keypoints.push_back(vec_from_json(p, "keypoint"));
  }
  kps.timestamp = j.value("timestamp", std::int64_t{0});
  return kps;
}

Json manifold_to_json(const DavsManifold& m) {
  Json middle = Json::array();
  for (const Vec3& p : m.polygon.middle_points) middle.push_back(vec_to_json(p));
  Json chart_pts = Json::array();
  for (const SpherePoint& p : m.polygon.chart_points) {
    chart_pts.push_back(vec_to_json(p.position()));
  }
  Json boundary = Json::array();
  for (const GeodesicPath& path : m.refined_boundary) {
    boundary.push_back(path_to_json(path));
  }
  return Json{
      {"camera", vec_to_json(m.camera.position())},
      {"centroid", vec_to_json(m.centroid.position())},
      {"chart", chart_to_json(m.camera.chart())},
      {"clipped", m.clipped},
      {"p1", vec_to_json(m.p1.position())},
      {"p2", vec_to_json(m.p2.position())},
      {"paths",
       Json{{"p0_p1", path_to_json(m.path_p0_p1)},
            {"p1_p2", path_to_json(m.path_p1_p2)},
            {"p2_p0", path_to_json(m.path_p2_p0)}}},
      {"refined_boundary", boundary},
      {"soi_polygon",
       Json{{"chart_points", chart_pts},
            {"middle_points", middle},
            {"middle_radius", m.polygon.middle_radius}}},
  };
}

DavsManifold manifold_from_json(const Json& j) {
  const SphereChart chart = chart_from_json(j.at("chart"));
  SoiPolygon poly;
  const Json& jp = j.at("soi_polygon");
  poly.middle_radius = jp.at("middle_radius").get<double>();
  for (const Json& p : jp.at("middle_points")) {
    poly.middle_points.push_back(vec_from_json(p, "middle point"));
  }
  for (const Json& p : jp.at("chart_points")) {
    poly.chart_points.push_back(
        chart.point(vec_from_json(p, "polygon vertex")));
  }
  std::vector<GeodesicPath> boundary;
  for (const Json& pb : j.at("refined_boundary")) {
    boundary.push_back(path_from_json(pb, chart));
  }
  DavsManifold m{
      chart.point(vec_from_json(j.at("camera"), "camera")),
      chart.point(vec_from_json(j.at("centroid"), "centroid")),
      chart.point(vec_from_json(j.at("p1"), "p1")),
      chart.point(vec_from_json(j.at("p2"), "p2")),
      path_from_json(j.at("paths").at("p0_p1"), chart),
      path_from_json(j.at("paths").at("p1_p2"), chart),
      path_from_json(j.at("paths").at("p2_p0"), chart),
      std::move(boundary),
      std::move(poly),
      j.value("clipped", false)};
  return m;
}

namespace {

BirthMode birth_mode_from_json(const Json& j, const std::string& where) {
  const std::string s = j.get<std::string>();
  if (s == "fixed") return BirthMode::fixed;
  if (s == "random") return BirthMode::random;
  throw Error(Errc::config_error,
              where + " must be 'fixed' or 'random', got '" + s + "'");
}

const char* birth_mode_name(BirthMode m) {
  return m == BirthMode::fixed ? "fixed" : "random";
}

}  // namespace

Json env_config_to_json(const EnvConfig& cfg) {
  Json j;
  j["chart"] = Json{{"center", vec_to_json(cfg.chart_center)},
                    {"radius", cfg.chart_radius}};
  j["t_max"] = cfg.t_max;
  j["discount"] = cfg.discount;
  j["lambda_r_ref"] = cfg.lambda_r_ref;
  j["lambda_d"] = cfg.lambda_d;
  j["lambda_r_scale_compensation"] = cfg.lambda_r_scale_compensation;
  j["tau_rigid"] = cfg.tau_rigid;
  j["tau_ring"] = cfg.tau_ring;
  j["camera"] = Json{{"pitch_min", cfg.camera.pitch_min},
                     {"pitch_max", cfg.camera.pitch_max},
                     {"yaw_min", cfg.camera.yaw_min},
                     {"yaw_max", cfg.camera.yaw_max},
                     {"step_max", cfg.camera.step_max},
                     {"fov_half", cfg.camera.fov_half},
                     {"birth_mode", birth_mode_name(cfg.camera.birth_mode)},
                     {"birth_pitch", cfg.camera.birth_pitch},
                     {"birth_yaw", cfg.camera.birth_yaw}};
  j["end_effector"] = Json{{"box_min", vec_to_json(cfg.ee.box_min)},
                           {"box_max", vec_to_json(cfg.ee.box_max)},
                           {"step_max", cfg.ee.step_max},
                           {"birth_mode", birth_mode_name(cfg.ee.birth_mode)},
                           {"birth_position", vec_to_json(cfg.ee.birth_position)}};
  j["bag"] = Json{{"fixed_handle", vec_to_json(cfg.bag.fixed_handle)},
                  {"rest_separation", cfg.bag.rest_separation},
                  {"max_separation", cfg.bag.max_separation},
                  {"overstretch_separation", cfg.bag.overstretch_separation},
                  {"max_aperture", cfg.bag.max_aperture},
                  {"loop_vertices", cfg.bag.loop_vertices},
                  {"tilt_gain", cfg.bag.tilt_gain}};
  j["cube"] = Json{{"half_extent", cfg.cube.half_extent},
                   {"spawn_radius", cfg.cube.spawn_radius},
                   {"base_height", cfg.cube.base_height}};
  if (cfg.obstacle) {
    j["obstacle"] = Json{{"kind", "disk"},
                         {"center", vec_to_json(cfg.obstacle->center)},
                         {"radius", cfg.obstacle->radius}};
  } else {
    j["obstacle"] = Json{{"kind", "none"}};
  }
  j["seed"] = cfg.seed;
  return j;
}

EnvConfig env_config_from_json(const Json& j) {
  EnvConfig cfg;
  reject_unknown_keys(
      j,
      {"chart", "t_max", "discount", "lambda_r_ref", "lambda_d",
       "lambda_r_scale_compensation", "tau_rigid", "tau_ring", "camera",
       "end_effector", "bag", "cube", "obstacle", "seed"},
      "config");

  if (j.contains("chart")) {
    const Json& jc = j.at("chart");
    reject_unknown_keys(jc, {"center", "radius"}, "config.chart");
    if (jc.contains("center")) {
      cfg.chart_center = vec_from_json(jc.at("center"), "chart.center");
    }
    if (jc.contains("radius")) cfg.chart_radius = jc.at("radius").get<double>();
  }
  if (j.contains("t_max")) cfg.t_max = j.at("t_max").get<int>();
  if (j.contains("discount")) cfg.discount = j.at("discount").get<double>();
  if (j.contains("lambda_r_ref")) {
    cfg.lambda_r_ref = j.at("lambda_r_ref").get<double>();
  }
  if (j.contains("lambda_d")) cfg.lambda_d = j.at("lambda_d").get<double>();
  if (j.contains("lambda_r_scale_compensation")) {
    cfg.lambda_r_scale_compensation =
        j.at("lambda_r_scale_compensation").get<bool>();
  }
  if (j.contains("tau_rigid")) cfg.tau_rigid = j.at("tau_rigid").get<double>();
  if (j.contains("tau_ring")) cfg.tau_ring = j.at("tau_ring").get<double>();

  if (j.contains("camera")) {
    const Json& jc = j.at("camera");
    reject_unknown_keys(jc,
                        {"pitch_min", "pitch_max", "yaw_min", "yaw_max",
                         "step_max", "fov_half", "birth_mode", "birth_pitch",
                         "birth_yaw"},
                        "config.camera");
    if (jc.contains("pitch_min")) cfg.camera.pitch_min = jc.at("pitch_min");
    if (jc.contains("pitch_max")) cfg.camera.pitch_max = jc.at("pitch_max");
    if (jc.contains("yaw_min")) cfg.camera.yaw_min = jc.at("yaw_min");
    if (jc.contains("yaw_max")) cfg.camera.yaw_max = jc.at("yaw_max");
    if (jc.contains("step_max")) cfg.camera.step_max = jc.at("step_max");
    if (jc.contains("fov_half")) cfg.camera.fov_half = jc.at("fov_half");
    if (jc.contains("birth_mode")) {
      cfg.camera.birth_mode =
          birth_mode_from_json(jc.at("birth_mode"), "camera.birth_mode");
    }
    if (jc.contains("birth_pitch")) cfg.camera.birth_pitch = jc.at("birth_pitch");
    if (jc.contains("birth_yaw")) cfg.camera.birth_yaw = jc.at("birth_yaw");
  }
  if (j.contains("end_effector")) {
    const Json& je = j.at("end_effector");
    reject_unknown_keys(
        je, {"box_min", "box_max", "step_max", "birth_mode", "birth_position"},
        "config.end_effector");
    if (je.contains("box_min")) {
      cfg.ee.box_min = vec_from_json(je.at("box_min"), "end_effector.box_min");
    }
    if (je.contains("box_max")) {
      cfg.ee.box_max = vec_from_json(je.at("box_max"), "end_effector.box_max");
    }
    if (je.contains("step_max")) cfg.ee.step_max = je.at("step_max");
    if (je.contains("birth_mode")) {
      cfg.ee.birth_mode =
          birth_mode_from_json(je.at("birth_mode"), "end_effector.birth_mode");
    }
    if (je.contains("birth_position")) {
      cfg.ee.birth_position =
          vec_from_json(je.at("birth_position"), "end_effector.birth_position");
    }
  }
  if (j.contains("bag")) {
    const Json& jb = j.at("bag");
    reject_unknown_keys(jb,
                        {"fixed_handle", "rest_separation", "max_separation",
                         "overstretch_separation", "max_aperture",
                         "loop_vertices", "tilt_gain"},
                        "config.bag");
    if (jb.contains("fixed_handle")) {
      cfg.bag.fixed_handle =
          vec_from_json(jb.at("fixed_handle"), "bag.fixed_handle");
    }
    if (jb.contains("rest_separation")) {
      cfg.bag.rest_separation = jb.at("rest_separation");
    }
    if (jb.contains("max_separation")) {
      cfg.bag.max_separation = jb.at("max_separation");
    }
    if (jb.contains("overstretch_separation")) {
      cfg.bag.overstretch_separation = jb.at("overstretch_separation");
    }
    if (jb.contains("max_aperture")) cfg.bag.max_aperture = jb.at("max_aperture");
    if (jb.contains("loop_vertices")) {
      cfg.bag.loop_vertices = jb.at("loop_vertices").get<int>();
    }
    if (jb.contains("tilt_gain")) cfg.bag.tilt_gain = jb.at("tilt_gain");
  }
  if (j.contains("cube")) {
    const Json& jc = j.at("cube");
    reject_unknown_keys(jc, {"half_extent", "spawn_radius", "base_height"},
                        "config.cube");
    if (jc.contains("half_extent")) cfg.cube.half_extent = jc.at("half_extent");
    if (jc.contains("spawn_radius")) cfg.cube.spawn_radius = jc.at("spawn_radius");
    if (jc.contains("base_height")) cfg.cube.base_height = jc.at("base_height");
  }
  if (j.contains("obstacle")) {
    const Json& jo = j.at("obstacle");
    reject_unknown_keys(jo, {"kind", "center", "radius"}, "config.obstacle");
    const std::string kind = jo.value("kind", "none");
    if (kind == "disk") {
      ObstacleDisk disk;
      disk.center = vec_from_json(jo.at("center"), "obstacle.center");
      disk.radius = jo.at("radius").get<double>();
      cfg.obstacle = disk;
    } else if (kind == "none") {
      cfg.obstacle.reset();
    } else {
      throw Error(Errc::config_error,
                  "obstacle.kind must be 'none' or 'disk', got '" + kind + "'");
    }
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();

  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(Errc::config_error, e.what());
  }
  return cfg;
}

Json params_to_json(const PolicyParams& params, const std::string& cfg_hash) {
  Json w = Json::array();
  for (int i = 0; i < kHeads; ++i) {
    for (int jj = 0; jj < kFeatureDim; ++jj) w.push_back(params.weights(i, jj));
  }
  Json b = Json::array();
  Json ls = Json::array();
  for (int i = 0; i < kHeads; ++i) {
    b.push_back(params.bias(i));
    ls.push_back(params.log_sigma(i));
  }
  return Json{{"bias", b},
              {"config_hash", cfg_hash},
              {"feature_dim", kFeatureDim},
              {"heads", kHeads},
              {"log_sigma", ls},
              {"weights", w}};
}

PolicyParams params_from_json(const Json& j) {
  if (j.value("feature_dim", kFeatureDim) != kFeatureDim ||
      j.value("heads", kHeads) != kHeads) {
    throw Error(Errc::config_error, "parameter file has incompatible shape");
  }
  PolicyParams p;
  const Json& w = j.at("weights");
  const Json& b = j.at("bias");
  const Json& ls = j.at("log_sigma");
  if (w.size() != kHeads * kFeatureDim || b.size() != kHeads ||
      ls.size() != kHeads) {
    throw Error(Errc::config_error, "parameter arrays have the wrong length");
  }
  int k = 0;
  for (int i = 0; i < kHeads; ++i) {
    for (int jj = 0; jj < kFeatureDim; ++jj) {
      p.weights(i, jj) = w[k++].get<double>();
    }
  }
  for (int i = 0; i < kHeads; ++i) p.bias(i) = b[i].get<double>();
  for (int i = 0; i < kHeads; ++i) p.log_sigma(i) = ls[i].get<double>();
  return p;
}

std::string config_hash(const Json& j) {
  const std::string dump = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string fmt9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

std::string episode_log_line(int t, const Observation& obs, double reward,
                             bool done, DoneReason reason) {
  std::string line = "{\"t\":" + std::to_string(t);
  line += ",\"pitch\":" + fmt9(obs.cam_pitch);
  line += ",\"yaw\":" + fmt9(obs.cam_yaw);
  line += ",\"ee\":[" + Json(obs.ee.x()).dump() + "," +
          Json(obs.ee.y()).dump() + "," + Json(obs.ee.z()).dump() + "]";
  line += ",\"a_rigid\":" + Json(obs.a_rigid).dump();
  line += ",\"n_ring\":" + std::to_string(obs.n_ring);
  line += ",\"reward\":" + Json(reward).dump();
  line += done ? ",\"done\":true" : ",\"done\":false";
  line += ",\"done_reason\":\"" + std::string(done_reason_name(reason)) +
          "\"}";
  return line;
}

void write_episode_jsonl(std::ostream& out, const RolloutRecord& rec) {
  if (rec.transitions.empty()) {
    throw Error(Errc::io_error,
                "rollout was recorded without transitions; nothing to write");
  }
  for (std::size_t i = 0; i < rec.transitions.size(); ++i) {
    const TransitionRecord& tr = rec.transitions[i];
    const bool last = i + 1 == rec.transitions.size();
    const bool done = last && rec.reason != DoneReason::none;
    out << episode_log_line(static_cast<int>(i) + 1, tr.after, tr.reward,
                            done, done ? rec.reason : DoneReason::none)
        << "\n";
  }
}

std::vector<EpisodeLogRecord> read_episode_jsonl(std::istream& in) {
  std::vector<EpisodeLogRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Json j = Json::parse(line);
    EpisodeLogRecord rec;
    rec.t = j.at("t").get<int>();
    rec.pitch = j.at("pitch").get<double>();
    rec.yaw = j.at("yaw").get<double>();
    rec.ee = vec_from_json(j.at("ee"), "ee");
    rec.a_rigid = j.at("a_rigid").get<double>();
    rec.n_ring = j.at("n_ring").get<int>();
    rec.reward = j.at("reward").get<double>();
    rec.done = j.at("done").get<bool>();
    rec.done_reason = j.at("done_reason").get<std::string>();
    out.push_back(rec);
  }
  return out;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(Errc::io_error, "cannot open '" + path + "'");
  }
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(Errc::config_error,
                "failed to parse '" + path + "': " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(Errc::io_error, "cannot write '" + path + "'");
  }
  out << content;
}

}  // namespace davs
