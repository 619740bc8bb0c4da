#pragma once

#include <vector>

#include "forcekf/config.hpp"
#include "forcekf/dataset.hpp"

namespace forcekf {

struct EstimatorOptions {
  /// Record every measurement application with the filter clock it met.
  bool audit = false;
};

enum class EventKind { kImu, kCamera };

struct AuditEntry {
  EventKind kind = EventKind::kImu;
  double measurement_time = 0.0;
  double filter_time = 0.0;  // filter clock when the measurement was applied
};

struct EstimatorStats {
  int imu_steps = 0;
  int accel_updates = 0;
  int accel_rejections = 0;
  int frames = 0;
  int frames_skipped = 0;  // camera frames outside the IMU time span
  int vision_updates = 0;
  int msckf_features = 0;
  int slam_promoted = 0;
  int ordering_violations = 0;
};

struct EstimatorOutput {
  /// Force always reported in {I}; covariance rotated accordingly when the
  /// filter models the force in {W}.
  std::vector<EstimateSample> samples;
  std::vector<AuditEntry> audit;
  EstimatorStats stats;
};

/// Runs the filter over the streams in timestamp order. Each IMU interval
/// is propagated with the mean of its endpoint gyro and thrust samples and
/// followed by the accelerometer update; a camera timestamp inside an
/// interval splits it so the clone is taken exactly at the camera time.
/// IMU goes first when both fall within 1 us.
EstimatorOutput run_estimator(const DatasetStreams& streams, const EstimatorConfig& cfg,
                              const EstimatorOptions& options = {});

/// Ground truth at `t` (linear in p, v, F; slerp in q), or nullopt outside
/// the sampled span.
std::optional<GroundTruthSample> interpolate_groundtruth(const std::vector<GroundTruthSample>& gt, double t);

}  // namespace forcekf
