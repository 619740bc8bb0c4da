#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "forcekf/dataset.hpp"
#include "forcekf/filter_state.hpp"
#include "forcekf/so3.hpp"
#include "forcekf/vision_update.hpp"

namespace forcekf {

enum class TrajectoryKind { kHover, kCircle, kLemniscate };

/// kLevel keeps roll/pitch at zero and lets the thrust vector point
/// anywhere; kFlatness tilts the body so that thrust is along body z.
enum class AttitudeMode { kLevel, kFlatness };

struct RopeConfig {
  Vec3 anchor{0.0, 0.0, 1.8};
  double rest_length = 1.5;  // m
  double stiffness = 4.0;    // m/s^2 per m of stretch; 0 disables
};

struct LandmarkVolume {
  int count = 150;
  Vec3 box_min{-5.0, -5.0, -1.0};
  Vec3 box_max{5.0, 5.0, 0.0};
};

/// Sensor noise of the simulated rig. Densities use the same units as
/// ProcessNoise; sigma_a and sigma_px are per-sample standard deviations.
struct SimNoise {
  double sigma_w = 2.0e-4;
  double sigma_bw = 2.0e-5;
  double sigma_ba = 1.0e-3;
  double sigma_t = 2.0e-3;
  double sigma_a = 0.04;
  double sigma_px = 1.0;
  double init_bw = 1.0e-3;  // std of the initial gyro bias, rad/s
  double init_ba = 1.0e-2;  // std of the initial accel bias, m/s^2
};

/// Body-frame force added from `start_time` on.
struct StepForce {
  Vec3 body = Vec3::Zero();
  double start_time = std::numeric_limits<double>::infinity();
};

struct SimConfig {
  TrajectoryKind trajectory = TrajectoryKind::kLemniscate;
  AttitudeMode attitude_mode = AttitudeMode::kLevel;
  Vec3 center{0.0, 0.0, 3.0};
  double amplitude = 2.0;           // m
  double period = 10.0;             // s
  double vertical_amplitude = 0.0;  // m
  double yaw_amplitude = 0.3;       // rad
  double yaw_period = 7.0;          // s
  double duration = 60.0;           // s
  double imu_rate = 200.0;          // Hz
  double camera_rate = 20.0;        // Hz
  double min_depth = 0.2;           // visibility range, m
  double max_depth = 30.0;
  Vec3 gravity{0.0, 0.0, -9.81};
  RopeConfig rope;
  LandmarkVolume landmarks;
  SimNoise noise;
  StepForce step;
  CameraModel camera;
  std::uint64_t seed = 1;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

/// Ground-truth sample. `omega` is the body angular rate.
struct SimRecord {
  double t = 0.0;
  UnitQuaternion q;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a_w = Vec3::Zero();
  Vec3 omega = Vec3::Zero();
  Vec3 force_body = Vec3::Zero();
  Vec3 thrust_true = Vec3::Zero();
};

/// Elastic rope pulling toward `anchor` once stretched beyond its rest
/// length (world frame).
Vec3 rope_force(const Vec3& p, const Vec3& anchor, double rest_length, double stiffness);

/// Ground truth at time t (closed form).
SimRecord sample_trajectory(const SimConfig& cfg, double t);

/// Ground truth at 1 / imu_rate spacing over [0, duration].
std::vector<SimRecord> gen_trajectory(const SimConfig& cfg);

/// Uniform landmarks in the configured box, deterministic per seed.
std::vector<Landmark> gen_landmarks(const SimConfig& cfg);

struct SimDataset {
  DatasetStreams streams;
  std::vector<SimRecord> truth;
  std::vector<Landmark> landmarks;
};

/// Noisy IMU, thrust and feature streams plus ground truth.
SimDataset synthesize(const SimConfig& cfg);

}  // namespace forcekf
