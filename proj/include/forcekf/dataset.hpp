#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "forcekf/filter_state.hpp"
#include "forcekf/so3.hpp"
#include "forcekf/vision_update.hpp"

namespace forcekf {

struct ImuSample {
  double t = 0.0;
  Vec3 omega = Vec3::Zero();  // rad/s, {I}
  Vec3 accel = Vec3::Zero();  // m/s^2, {I}
};

struct ThrustSample {
  double t = 0.0;
  Vec3 thrust = Vec3::Zero();  // mass-normalized, m/s^2, {I}
};

struct GroundTruthSample {
  double t = 0.0;
  UnitQuaternion q;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 force = Vec3::Zero();  // mass-normalized external force in {I}
};

/// Measurement streams of one sequence, each strictly increasing in time.
struct DatasetStreams {
  std::vector<ImuSample> imu;
  std::vector<ThrustSample> thrust;
  std::vector<CameraFrame> frames;
  std::optional<std::vector<GroundTruthSample>> groundtruth;
};

/// Filter output at one instant: the ImuState (force in {I}) and the
/// covariance of its 18-dim error.
struct EstimateSample {
  double t = 0.0;
  ImuState x;
  Eigen::Matrix<double, 18, 18> P = Eigen::Matrix<double, 18, 18>::Zero();
};

}  // namespace forcekf
