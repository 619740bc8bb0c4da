#include "forcekf/so3.hpp"

#include <cmath>
#include <numbers>

#include "forcekf/errors.hpp"

namespace forcekf {

namespace {
constexpr double kSmallAngle = 1e-7;
}

UnitQuaternion UnitQuaternion::from_wxyz(double w, double x, double y, double z) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-6) {
    throw PreconditionError("so3_math", "quaternion is not unit norm (|q| = " + std::to_string(n) + ")");
  }
  return UnitQuaternion(Eigen::Quaterniond(w, x, y, z));
}

UnitQuaternion UnitQuaternion::from_rotation(const Mat3& R_IW) {
  return UnitQuaternion(Eigen::Quaterniond(R_IW));
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 exp_so3(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 K = skew(phi);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + K + 0.5 * K * K;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + a * K + b * K * K;
}

Vec3 log_so3(const Mat3& R) {
  // Going through the quaternion is better conditioned near 0 and pi than
  // the trace formula.
  Eigen::Quaterniond q(R);
  if (q.w() < 0.0) q.coeffs() = -q.coeffs();
  const double vn = q.vec().norm();
  const double angle = 2.0 * std::atan2(vn, q.w());
  if (angle >= std::numbers::pi - 1e-6) {
    throw NumericalError("so3_math", "degenerate rotation: angle is at pi");
  }
  if (vn < 1e-12) return 2.0 * q.vec();
  return q.vec() * (angle / vn);
}

Mat3 left_jacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 K = skew(phi);
  if (theta < 1e-5) {
    return Mat3::Identity() + 0.5 * K + (1.0 / 6.0) * K * K;
  }
  const double t2 = theta * theta;
  return Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * K +
         (theta - std::sin(theta)) / (t2 * theta) * K * K;
}

Mat3 quat_to_rot(const UnitQuaternion& q) {
  const double n = q.eigen().norm();
  if (std::abs(n - 1.0) > 1e-6) {
    throw PreconditionError("so3_math", "quat_to_rot: quaternion not normalized");
  }
  return q.R();
}

namespace {
Eigen::Quaterniond quat_exp(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta < kSmallAngle) {
    Eigen::Quaterniond dq(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
    return dq.normalized();
  }
  return Eigen::Quaterniond(Eigen::AngleAxisd(theta, phi / theta));
}
}  // namespace

UnitQuaternion boxplus(const UnitQuaternion& q, const Vec3& dtheta) {
  return UnitQuaternion(quat_exp(-dtheta) * q.eigen());
}

Vec3 boxminus(const UnitQuaternion& q1, const UnitQuaternion& q2) {
  // R1 = Exp(-d) R2  =>  d = -Log(R1 R2^T)
  const Eigen::Quaterniond rel = q1.eigen() * q2.eigen().conjugate();
  return -log_so3(rel.toRotationMatrix());
}

UnitQuaternion integrate_gyro(const UnitQuaternion& q, const Vec3& omega, double dt) {
  return UnitQuaternion(quat_exp(-omega * dt) * q.eigen());
}

Eigen::Matrix4d omega_matrix(const Vec3& omega) {
  // Left multiplication by the pure quaternion (0, -omega), in (w, x, y, z).
  const Vec3 a = -omega;
  Eigen::Matrix4d m;
  m << 0.0, -a.x(), -a.y(), -a.z(),
       a.x(), 0.0, -a.z(), a.y(),
       a.y(), a.z(), 0.0, -a.x(),
       a.z(), -a.y(), a.x(), 0.0;
  return m;
}

}  // namespace forcekf
