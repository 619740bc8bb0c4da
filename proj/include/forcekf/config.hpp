#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "forcekf/accel_update.hpp"
#include "forcekf/filter_state.hpp"
#include "forcekf/propagation.hpp"
#include "forcekf/simulator.hpp"
#include "forcekf/vision_update.hpp"

namespace forcekf {

enum class OutputCadence { kImu, kCamera };

struct EstimatorConfig {
  Vec3 gravity{0.0, 0.0, -9.81};
  int window_size = 11;
  int max_slam_features = 0;
  ProcessNoise process;
  AccelNoise accel;
  double sigma_px = 1.0;
  InitialStd initial;
  double accel_gate_prob = 0.0;  // 0 disables the accelerometer gate
  double vision_gate_prob = 0.95;
  int min_track_length = 3;
  TriangulationOptions triangulation;
  CameraModel camera;
  bool use_accel_update = true;
  bool use_vision = true;
  ForceFrame force_frame = ForceFrame::kBody;
  bool init_from_groundtruth = true;
  OutputCadence cadence = OutputCadence::kImu;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  VisionOptions vision_options() const;
};

/// Everything a config file can set: the estimator and the simulator
/// (which shares the camera section).
struct Config {
  EstimatorConfig estimator;
  SimConfig sim;
};

/// Parses the flat `section.key = value` format. `#` starts a comment,
/// vectors are comma separated, booleans are true/false. Unknown keys,
/// malformed lines and invariant violations raise ConfigError.
Config parse_config(const std::filesystem::path& path);
Config parse_config_text(const std::string& text, const std::string& source = "<string>");

/// Writes every key with its current value in the same format.
std::string format_config(const Config& cfg);

}  // namespace forcekf
