#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace forcekf {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Attitude of the IMU frame {I} with respect to the world frame {W}.
///
/// The associated rotation matrix R() maps world-frame vectors into {I}:
///   v_I = R() * v_W.
/// Internally a Hamilton quaternion whose rotation matrix is exactly R().
///
/// The error convention used by every Jacobian in the library is
///   R(q boxplus dtheta) = Exp(-dtheta) * R(q) ~= (I - [dtheta]x) * R(q),
/// i.e. a small rotation applied on the left of the {W}->{I} map.
class UnitQuaternion {
 public:
  UnitQuaternion() : q_(Eigen::Quaterniond::Identity()) {}

  /// Components in (w, x, y, z) order. Rejects inputs whose norm is off
  /// by more than 1e-6 and normalizes the rest.
  static UnitQuaternion from_wxyz(double w, double x, double y, double z);
  /// Builds the attitude whose {W}->{I} rotation matrix is `R_IW`.
  static UnitQuaternion from_rotation(const Mat3& R_IW);
  static UnitQuaternion identity() { return {}; }

  double w() const { return q_.w(); }
  double x() const { return q_.x(); }
  double y() const { return q_.y(); }
  double z() const { return q_.z(); }

  Mat3 R() const { return q_.toRotationMatrix(); }
  const Eigen::Quaterniond& eigen() const { return q_; }

 private:
  explicit UnitQuaternion(const Eigen::Quaterniond& q) : q_(q.normalized()) {}
  Eigen::Quaterniond q_;

  friend UnitQuaternion boxplus(const UnitQuaternion&, const Vec3&);
  friend UnitQuaternion integrate_gyro(const UnitQuaternion&, const Vec3&, double);
};

/// Cross-product matrix: skew(v) * w == v.cross(w).
Mat3 skew(const Vec3& v);

/// Rotation-vector exponential (Rodrigues).
Mat3 exp_so3(const Vec3& phi);

/// Inverse of exp_so3 for angles below pi. Throws NumericalError when the
/// angle is within 1e-6 of pi.
Vec3 log_so3(const Mat3& R);

/// Left Jacobian of SO(3): Exp(phi + d) ~= Exp(J_l(phi) d) Exp(phi).
Mat3 left_jacobian(const Vec3& phi);

/// R(q); throws PreconditionError when |q| deviates from 1 by more than 1e-6.
Mat3 quat_to_rot(const UnitQuaternion& q);

UnitQuaternion boxplus(const UnitQuaternion& q, const Vec3& dtheta);

/// Vector d with boxplus(q2, d) == q1 (up to sign). Throws NumericalError
/// when the relative rotation is within 1e-6 of pi.
Vec3 boxminus(const UnitQuaternion& q1, const UnitQuaternion& q2);

/// Zeroth-order integration of q_dot = 1/2 Omega(omega) q over dt with
/// `omega` the body angular rate held constant. Equivalent to
/// boxplus(q, omega * dt).
UnitQuaternion integrate_gyro(const UnitQuaternion& q, const Vec3& omega, double dt);

/// 4x4 matrix Omega(omega) acting on (w, x, y, z) components of the
/// internal quaternion, such that q_dot = 1/2 Omega(omega) q reproduces
/// R_dot = -[omega]x R. Used by tests as an independent integration route.
Eigen::Matrix4d omega_matrix(const Vec3& omega);

}  // namespace forcekf
