#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "forcekf/filter_state.hpp"

namespace forcekf {

/// Undistorted pinhole camera rigidly attached to the IMU. A point p_I in
/// {I} maps to p_C = R_IC (p_I - p_IC) in the camera frame. The default
/// looks down along -z of {I}.
struct CameraModel {
  double fx = 400.0;
  double fy = 400.0;
  double cx = 320.0;
  double cy = 240.0;
  Mat3 R_IC = Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal();
  Vec3 p_IC = Vec3::Zero();
  int width = 640;
  int height = 480;
};

struct FeatureObservation {
  std::int64_t id = 0;
  double u = 0.0;
  double v = 0.0;
};

struct CameraFrame {
  double t = 0.0;
  std::vector<FeatureObservation> features;
};

struct TrackObservation {
  double t = 0.0;
  double u = 0.0;
  double v = 0.0;
};

struct FeatureTrack {
  std::int64_t id = 0;
  std::vector<TrackObservation> observations;
};

/// Point in the camera frame of a clone.
Vec3 to_camera(const Vec3& p_f, const PoseClone& clone, const CameraModel& cam);

/// Pixel coordinates of world point `p_f`, or nullopt when it is behind the
/// camera (Z <= 1e-6).
std::optional<Eigen::Vector2d> project_pinhole(const Vec3& p_f, const PoseClone& clone,
                                               const CameraModel& cam);

struct TriangulationOptions {
  double min_baseline_ratio = 0.02;
  double min_depth = 0.1;
  double max_depth = 60.0;
  int max_iterations = 10;
  double step_tolerance = 1e-8;
};

enum class TriangulationFailure {
  kTooFewObservations,
  kMissingClone,
  kSingular,
  kLowParallax,
  kDepthOutOfRange,
  kDiverged,
};

struct TriangulationResult {
  std::optional<Vec3> point;
  TriangulationFailure failure = TriangulationFailure::kSingular;

  explicit operator bool() const { return point.has_value(); }
};

/// Linear triangulation from normalized bearings followed by Gauss-Newton on
/// the pixel reprojection error.
TriangulationResult triangulate(const FeatureTrack& track, const std::vector<PoseClone>& clones,
                                const CameraModel& cam, const TriangulationOptions& opts = {});

struct FeatureLinearization {
  Eigen::MatrixXd H_x;  // 2m x dim
  Eigen::MatrixXd H_f;  // 2m x 3
  Eigen::VectorXd r;    // 2m, measured minus predicted pixels
};

/// Stacked reprojection residuals of `track` against the clones in `state`
/// and their Jacobians. Throws PreconditionError when an observation has no
/// live clone.
FeatureLinearization feature_linearize(const FilterState& state, const Vec3& p_f,
                                       const FeatureTrack& track, const CameraModel& cam);

struct ProjectedMeasurement {
  Eigen::MatrixXd H;
  Eigen::VectorXd r;
};

/// Projects onto the left nullspace of H_f, removing the landmark from the
/// measurement model. Returns nullopt when H_f is rank deficient or there
/// are not enough rows.
std::optional<ProjectedMeasurement> nullspace_project(const Eigen::MatrixXd& H_x,
                                                      const Eigen::MatrixXd& H_f,
                                                      const Eigen::VectorXd& r);

/// QR compression of a tall measurement system (rows > cols). Noise must be
/// isotropic for the compressed system to keep the same noise model.
void compress_measurement(Eigen::MatrixXd& H, Eigen::VectorXd& r);

struct VisionOptions {
  int window_size = 11;
  int max_slam_features = 0;
  double sigma_px = 1.0;
  double gate_prob = 0.95;
  int min_track_length = 3;
  TriangulationOptions triangulation;
};

struct FrameStats {
  int msckf_candidates = 0;
  int msckf_used = 0;
  int triangulation_failures = 0;
  int gate_rejections = 0;
  int slam_updated = 0;
  int slam_promoted = 0;
  int slam_marginalized = 0;
  bool update_applied = false;
};

/// Sliding-window visual updater. Owns the feature-track bookkeeping and
/// applies one frame at a time to a FilterState whose clock sits at the
/// frame timestamp.
class VisualUpdater {
 public:
  VisualUpdater(CameraModel cam, VisionOptions opts);

  /// Clones the pose, updates with the tracks that ended or span the whole
  /// window, handles SLAM landmarks and marginalizes the overflow clone.
  FrameStats update_with_frame(FilterState& state, const CameraFrame& frame);

  const std::map<std::int64_t, FeatureTrack>& tracks() const { return tracks_; }
  const CameraModel& camera() const { return cam_; }
  const VisionOptions& options() const { return opts_; }

 private:
  void update_slam_landmarks(FilterState& state, const std::vector<FeatureObservation>& obs,
                             FrameStats& stats) const;
  bool promote_to_landmark(FilterState& state, const FeatureTrack& track) const;

  CameraModel cam_;
  VisionOptions opts_;
  std::map<std::int64_t, FeatureTrack> tracks_;
};

}  // namespace forcekf
