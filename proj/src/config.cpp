#include "forcekf/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <vector>

#include "forcekf/errors.hpp"

namespace forcekf {

void EstimatorConfig::validate() const {
  const auto fail = [](const std::string& key, const std::string& what) {
    throw ConfigError("dataset_io", key + " " + what);
  };
  if (window_size < 3) fail("filter.window_size", "must be at least 3");
  if (max_slam_features < 0) fail("filter.max_slam_features", "must be non-negative");
  const double g = gravity.norm();
  if (!(g >= 9.0 && g <= 10.5)) fail("filter.gravity", "norm must lie in [9.0, 10.5]");
  const std::pair<const char*, double> sigmas[] = {
      {"noise.sigma_w", process.sigma_w},   {"noise.sigma_bw", process.sigma_bw},
      {"noise.sigma_ba", process.sigma_ba}, {"noise.sigma_f", process.sigma_f},
      {"noise.sigma_t", process.sigma_t},   {"noise.sigma_a", accel.sigma_a},
      {"noise.sigma_px", sigma_px},         {"init.sigma_theta", initial.theta},
      {"init.sigma_p", initial.p},          {"init.sigma_v", initial.v},
      {"init.sigma_bw", initial.bg},        {"init.sigma_ba", initial.ba},
      {"init.sigma_f", initial.force}};
  for (const auto& [key, value] : sigmas) {
    if (!(value > 0.0) || !std::isfinite(value)) fail(key, "must be positive");
  }
  if (accel_gate_prob < 0.0 || accel_gate_prob >= 1.0) fail("filter.accel_gate_prob", "must lie in [0, 1)");
  if (vision_gate_prob <= 0.0 || vision_gate_prob >= 1.0) fail("vision.gate_prob", "must lie in (0, 1)");
  if (min_track_length < 2) fail("vision.min_track_length", "must be at least 2");
  if (triangulation.min_depth <= 0.0 || triangulation.max_depth <= triangulation.min_depth) {
    fail("vision.max_depth", "must exceed vision.min_depth > 0");
  }
  if (!(camera.fx > 0.0) || !(camera.fy > 0.0)) fail("camera.fx", "focal lengths must be positive");
  if (camera.width <= 0 || camera.height <= 0) fail("camera.width", "image size must be positive");
  const double ortho = (camera.R_IC * camera.R_IC.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-6 || std::abs(camera.R_IC.determinant() - 1.0) > 1e-6) {
    fail("camera.R_IC", "must be a rotation matrix");
  }
}

VisionOptions EstimatorConfig::vision_options() const {
  VisionOptions o;
  o.window_size = window_size;
  o.max_slam_features = max_slam_features;
  o.sigma_px = sigma_px;
  o.gate_prob = vision_gate_prob;
  o.min_track_length = min_track_length;
  o.triangulation = triangulation;
  return o;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<double> parse_numbers(const std::string& key, const std::string& value, std::size_t n) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (item.empty() || used != item.size() || std::isnan(x)) {
      throw ConfigError("dataset_io", key + ": '" + value + "' is not a valid number list");
    }
    out.push_back(x);
  }
  if (out.size() != n) {
    throw ConfigError("dataset_io", key + ": expected " + std::to_string(n) + " value(s), got " +
                                        std::to_string(out.size()));
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) { return parse_numbers(key, v, 1)[0]; }

int parse_int(const std::string& key, const std::string& v) {
  const double x = parse_double(key, v);
  if (x != std::floor(x) || std::abs(x) > 1e9) throw ConfigError("dataset_io", key + " must be an integer");
  return static_cast<int>(x);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("dataset_io", key + " must be true or false");
}

Vec3 parse_vec3(const std::string& key, const std::string& v) {
  const auto n = parse_numbers(key, v, 3);
  return {n[0], n[1], n[2]};
}

Mat3 parse_mat3(const std::string& key, const std::string& v) {
  const auto n = parse_numbers(key, v, 9);
  Mat3 m;
  m << n[0], n[1], n[2], n[3], n[4], n[5], n[6], n[7], n[8];
  return m;
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(17) << x;
  return os.str();
}
std::string fmt(const Vec3& v) { return fmt(v.x()) + ", " + fmt(v.y()) + ", " + fmt(v.z()); }
std::string fmt(const Mat3& m) {
  std::string s;
  for (int i = 0; i < 9; ++i) s += (i ? ", " : "") + fmt(m(i / 3, i % 3));
  return s;
}
std::string fmt(bool b) { return b ? "true" : "false"; }

struct Field {
  std::function<void(Config&, const std::string&, const std::string&)> set;
  std::function<std::string(const Config&)> get;
};

template <typename Getter>
Field double_field(Getter ref) {
  return {[ref](Config& c, const std::string& k, const std::string& v) { ref(c) = parse_double(k, v); },
          [ref](const Config& c) { return fmt(ref(const_cast<Config&>(c))); }};
}
template <typename Getter>
Field int_field(Getter ref) {
  return {[ref](Config& c, const std::string& k, const std::string& v) { ref(c) = parse_int(k, v); },
          [ref](const Config& c) { return std::to_string(ref(const_cast<Config&>(c))); }};
}
template <typename Getter>
Field bool_field(Getter ref) {
  return {[ref](Config& c, const std::string& k, const std::string& v) { ref(c) = parse_bool(k, v); },
          [ref](const Config& c) { return fmt(static_cast<bool>(ref(const_cast<Config&>(c)))); }};
}
template <typename Getter>
Field vec3_field(Getter ref) {
  return {[ref](Config& c, const std::string& k, const std::string& v) { ref(c) = parse_vec3(k, v); },
          [ref](const Config& c) { return fmt(Vec3(ref(const_cast<Config&>(c)))); }};
}

template <typename Enum>
Field enum_field(std::function<Enum&(Config&)> ref, std::vector<std::pair<std::string, Enum>> names) {
  return {[ref, names](Config& c, const std::string& k, const std::string& v) {
            for (const auto& [name, value] : names) {
              if (name == v) {
                ref(c) = value;
                return;
              }
            }
            std::string allowed;
            for (const auto& [name, value] : names) allowed += (allowed.empty() ? "" : "|") + name;
            throw ConfigError("dataset_io", k + " must be one of " + allowed);
          },
          [ref, names](const Config& c) {
            const Enum e = ref(const_cast<Config&>(c));
            for (const auto& [name, value] : names) {
              if (value == e) return name;
            }
            return std::string("?");
          }};
}

#define FK_REF(expr) [](Config& c) -> auto& { return c.expr; }

const std::map<std::string, Field>& field_table() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    // Estimator.
    t["filter.gravity"] = vec3_field(FK_REF(estimator.gravity));
    t["filter.window_size"] = int_field(FK_REF(estimator.window_size));
    t["filter.max_slam_features"] = int_field(FK_REF(estimator.max_slam_features));
    t["filter.use_accel_update"] = bool_field(FK_REF(estimator.use_accel_update));
    t["filter.use_vision"] = bool_field(FK_REF(estimator.use_vision));
    t["filter.accel_gate_prob"] = double_field(FK_REF(estimator.accel_gate_prob));
    t["filter.init_from_groundtruth"] = bool_field(FK_REF(estimator.init_from_groundtruth));
    t["filter.force_frame"] = enum_field<ForceFrame>(
        FK_REF(estimator.force_frame), {{"body", ForceFrame::kBody}, {"world", ForceFrame::kWorld}});
    t["filter.output_cadence"] = enum_field<OutputCadence>(
        FK_REF(estimator.cadence), {{"imu", OutputCadence::kImu}, {"camera", OutputCadence::kCamera}});
    t["noise.sigma_w"] = double_field(FK_REF(estimator.process.sigma_w));
    t["noise.sigma_bw"] = double_field(FK_REF(estimator.process.sigma_bw));
    t["noise.sigma_ba"] = double_field(FK_REF(estimator.process.sigma_ba));
    t["noise.sigma_f"] = double_field(FK_REF(estimator.process.sigma_f));
    t["noise.sigma_t"] = double_field(FK_REF(estimator.process.sigma_t));
    t["noise.sigma_a"] = double_field(FK_REF(estimator.accel.sigma_a));
    t["noise.sigma_px"] = double_field(FK_REF(estimator.sigma_px));
    t["init.sigma_theta"] = double_field(FK_REF(estimator.initial.theta));
    t["init.sigma_p"] = double_field(FK_REF(estimator.initial.p));
    t["init.sigma_v"] = double_field(FK_REF(estimator.initial.v));
    t["init.sigma_bw"] = double_field(FK_REF(estimator.initial.bg));
    t["init.sigma_ba"] = double_field(FK_REF(estimator.initial.ba));
    t["init.sigma_f"] = double_field(FK_REF(estimator.initial.force));
    t["vision.gate_prob"] = double_field(FK_REF(estimator.vision_gate_prob));
    t["vision.min_track_length"] = int_field(FK_REF(estimator.min_track_length));
    t["vision.min_baseline_ratio"] = double_field(FK_REF(estimator.triangulation.min_baseline_ratio));
    t["vision.min_depth"] = double_field(FK_REF(estimator.triangulation.min_depth));
    t["vision.max_depth"] = double_field(FK_REF(estimator.triangulation.max_depth));

    // Camera, shared by the estimator and the simulator.
    const auto both_d = [](double CameraModel::*m) {
      return Field{[m](Config& c, const std::string& k, const std::string& v) {
                     c.estimator.camera.*m = c.sim.camera.*m = parse_double(k, v);
                   },
                   [m](const Config& c) { return fmt(c.estimator.camera.*m); }};
    };
    const auto both_i = [](int CameraModel::*m) {
      return Field{[m](Config& c, const std::string& k, const std::string& v) {
                     c.estimator.camera.*m = c.sim.camera.*m = parse_int(k, v);
                   },
                   [m](const Config& c) { return std::to_string(c.estimator.camera.*m); }};
    };
    t["camera.fx"] = both_d(&CameraModel::fx);
    t["camera.fy"] = both_d(&CameraModel::fy);
    t["camera.cx"] = both_d(&CameraModel::cx);
    t["camera.cy"] = both_d(&CameraModel::cy);
    t["camera.width"] = both_i(&CameraModel::width);
    t["camera.height"] = both_i(&CameraModel::height);
    t["camera.R_IC"] = Field{[](Config& c, const std::string& k, const std::string& v) {
                               c.estimator.camera.R_IC = c.sim.camera.R_IC = parse_mat3(k, v);
                             },
                             [](const Config& c) { return fmt(c.estimator.camera.R_IC); }};
    t["camera.p_IC"] = Field{[](Config& c, const std::string& k, const std::string& v) {
                               c.estimator.camera.p_IC = c.sim.camera.p_IC = parse_vec3(k, v);
                             },
                             [](const Config& c) { return fmt(c.estimator.camera.p_IC); }};

    // Simulator.
    t["sim.trajectory"] = enum_field<TrajectoryKind>(FK_REF(sim.trajectory),
                                                     {{"hover", TrajectoryKind::kHover},
                                                      {"circle", TrajectoryKind::kCircle},
                                                      {"lemniscate", TrajectoryKind::kLemniscate}});
    t["sim.attitude_mode"] = enum_field<AttitudeMode>(
        FK_REF(sim.attitude_mode), {{"level", AttitudeMode::kLevel}, {"flatness", AttitudeMode::kFlatness}});
    t["sim.center"] = vec3_field(FK_REF(sim.center));
    t["sim.amplitude"] = double_field(FK_REF(sim.amplitude));
    t["sim.period"] = double_field(FK_REF(sim.period));
    t["sim.vertical_amplitude"] = double_field(FK_REF(sim.vertical_amplitude));
    t["sim.yaw_amplitude"] = double_field(FK_REF(sim.yaw_amplitude));
    t["sim.yaw_period"] = double_field(FK_REF(sim.yaw_period));
    t["sim.duration"] = double_field(FK_REF(sim.duration));
    t["sim.imu_rate"] = double_field(FK_REF(sim.imu_rate));
    t["sim.camera_rate"] = double_field(FK_REF(sim.camera_rate));
    t["sim.min_depth"] = double_field(FK_REF(sim.min_depth));
    t["sim.max_depth"] = double_field(FK_REF(sim.max_depth));
    t["sim.seed"] = Field{[](Config& c, const std::string& k, const std::string& v) {
                            const double x = parse_double(k, v);
                            if (x < 0 || x != std::floor(x) || x > 9.007199254740992e15) {
                              throw ConfigError("dataset_io", k + " must be a non-negative integer");
                            }
                            c.sim.seed = static_cast<std::uint64_t>(x);
                          },
                          [](const Config& c) { return std::to_string(c.sim.seed); }};
    t["sim.step_force"] = vec3_field(FK_REF(sim.step.body));
    t["sim.step_time"] = double_field(FK_REF(sim.step.start_time));
    t["rope.anchor"] = vec3_field(FK_REF(sim.rope.anchor));
    t["rope.rest_length"] = double_field(FK_REF(sim.rope.rest_length));
    t["rope.stiffness"] = double_field(FK_REF(sim.rope.stiffness));
    t["landmarks.count"] = int_field(FK_REF(sim.landmarks.count));
    t["landmarks.box_min"] = vec3_field(FK_REF(sim.landmarks.box_min));
    t["landmarks.box_max"] = vec3_field(FK_REF(sim.landmarks.box_max));
    t["simnoise.sigma_w"] = double_field(FK_REF(sim.noise.sigma_w));
    t["simnoise.sigma_bw"] = double_field(FK_REF(sim.noise.sigma_bw));
    t["simnoise.sigma_ba"] = double_field(FK_REF(sim.noise.sigma_ba));
    t["simnoise.sigma_t"] = double_field(FK_REF(sim.noise.sigma_t));
    t["simnoise.sigma_a"] = double_field(FK_REF(sim.noise.sigma_a));
    t["simnoise.sigma_px"] = double_field(FK_REF(sim.noise.sigma_px));
    t["simnoise.init_bw"] = double_field(FK_REF(sim.noise.init_bw));
    t["simnoise.init_ba"] = double_field(FK_REF(sim.noise.init_ba));
    return t;
  }();
  return table;
}

#undef FK_REF

}  // namespace

Config parse_config_text(const std::string& text, const std::string& source) {
  Config cfg;
  cfg.sim.gravity = cfg.estimator.gravity;
  cfg.sim.camera = cfg.estimator.camera;
  const auto& table = field_table();
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) {
      throw ConfigError("dataset_io", where + ": expected 'section.key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("dataset_io", where + ": unknown key '" + key + "'");
    if (value.empty()) throw ConfigError("dataset_io", where + ": " + key + " has no value");
    try {
      it->second.set(cfg, key, value);
    } catch (const ConfigError& e) {
      throw ConfigError("dataset_io", where + ": " + e.what());
    }
  }
  cfg.sim.gravity = cfg.estimator.gravity;
  cfg.estimator.validate();
  cfg.sim.validate();
  return cfg;
}

Config parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("dataset_io", "cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

std::string format_config(const Config& cfg) {
  std::string out;
  for (const auto& [key, field] : field_table()) out += key + " = " + field.get(cfg) + "\n";
  return out;
}

}  // namespace forcekf
