#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "forcekf/so3.hpp"

namespace forcekf {

/// Offsets of the ImuState sub-blocks inside the error state.
namespace idx {
inline constexpr int kTheta = 0;
inline constexpr int kPos = 3;
inline constexpr int kVel = 6;
inline constexpr int kGyroBias = 9;
inline constexpr int kAccelBias = 12;
inline constexpr int kForce = 15;
inline constexpr int kImuDim = 18;
inline constexpr int kCloneDim = 6;
inline constexpr int kLandmarkDim = 3;
}  // namespace idx

/// Current vehicle state. `force` is the mass-normalized external force
/// expressed in {I} (or in {W} when the world-frame-force experiment is on).
struct ImuState {
  UnitQuaternion q;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
  Vec3 ba = Vec3::Zero();
  Vec3 force = Vec3::Zero();
};

/// Applies an 18-dim error vector to an ImuState.
ImuState boxplus(const ImuState& x, const Eigen::Matrix<double, 18, 1>& dx);
/// Inverse of the ImuState boxplus.
Eigen::Matrix<double, 18, 1> boxminus(const ImuState& a, const ImuState& b);

struct PoseClone {
  UnitQuaternion q;
  Vec3 p = Vec3::Zero();
  double timestamp = 0.0;
};

struct Landmark {
  std::int64_t id = 0;
  Vec3 p_f = Vec3::Zero();
};

/// Full filter state: ImuState, pose clones (oldest first) and SLAM
/// landmarks, with the joint error-state covariance laid out as
/// [imu (18) | clones (6 each) | landmarks (3 each)].
struct FilterState {
  ImuState imu;
  std::vector<PoseClone> clones;
  std::vector<Landmark> landmarks;
  Eigen::MatrixXd P;
  double time = 0.0;

  int dim() const {
    return idx::kImuDim + idx::kCloneDim * static_cast<int>(clones.size()) +
           idx::kLandmarkDim * static_cast<int>(landmarks.size());
  }
  int clone_offset(std::size_t i) const { return idx::kImuDim + idx::kCloneDim * static_cast<int>(i); }
  int landmark_offset(std::size_t j) const {
    return idx::kImuDim + idx::kCloneDim * static_cast<int>(clones.size()) +
           idx::kLandmarkDim * static_cast<int>(j);
  }
  /// Index of the clone taken at `t` (within `tol`), if any.
  std::optional<std::size_t> find_clone(double t, double tol = 1e-9) const;
  std::optional<std::size_t> find_landmark(std::int64_t id) const;
};

/// Prior standard deviations of the ImuState blocks.
struct InitialStd {
  double theta = 0.01;  // rad
  double p = 0.01;      // m
  double v = 0.05;      // m/s
  double bg = 0.002;    // rad/s
  double ba = 0.01;     // m/s^2
  double force = 1.0;   // m/s^2
};

/// Filter at `t0` with zero biases and force, no clones or landmarks and a
/// block-diagonal prior. Throws ConfigError on non-positive deviations.
FilterState init_filter(const InitialStd& sigma, const UnitQuaternion& q0, const Vec3& p0,
                        const Vec3& v0, double t0);

/// Appends a clone of the current pose at `t` (which must equal state.time)
/// and augments the covariance with the duplication Jacobian.
void clone_pose(FilterState& state, double t);

/// Removes the oldest clone. Requires exactly `window_size + 1` clones.
void marginalize_oldest_clone(FilterState& state, int window_size);

/// Removes landmark `j` and its covariance rows/columns.
void marginalize_landmark(FilterState& state, std::size_t j);

/// Appends a landmark with the given cross-covariance to the existing state
/// (`P_xf`, dim x 3) and marginal covariance (`P_ff`).
void augment_landmark(FilterState& state, const Landmark& lm, const Eigen::MatrixXd& P_xf,
                      const Eigen::Matrix3d& P_ff);

/// Applies `dx` (length dim()) to the mean: attitudes via boxplus, the rest
/// additively.
void apply_correction(FilterState& state, const Eigen::VectorXd& dx);

void symmetrize(Eigen::MatrixXd& P);

/// Upper `prob` quantile of the chi-square distribution with `dof` degrees
/// of freedom.
double chi2_quantile(double prob, int dof);

enum class UpdateStatus { kAccepted, kRejected };

struct UpdateResult {
  UpdateStatus status = UpdateStatus::kAccepted;
  double mahalanobis = 0.0;  // r^T S^-1 r
  double threshold = 0.0;    // gate threshold, 0 when gating is off

  bool accepted() const { return status == UpdateStatus::kAccepted; }
};

/// Gated EKF update with a Joseph-form covariance update.
///
/// `gate_prob` empty disables the chi-square gate. A rejected update leaves
/// the state untouched. Throws NumericalError if S = H P H^T + R cannot be
/// factorized (state untouched as well).
UpdateResult apply_ekf_update(FilterState& state, const Eigen::MatrixXd& H,
                              const Eigen::VectorXd& r, const Eigen::MatrixXd& R,
                              std::optional<double> gate_prob);

}  // namespace forcekf
