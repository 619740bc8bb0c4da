#include "forcekf/accel_update.hpp"

namespace forcekf {

AccelResidual accel_residual(const ImuState& x, const Vec3& a_m, const Vec3& thrust,
                             ForceFrame frame) {
  AccelResidual out;
  out.H.setZero();
  out.H.block<3, 3>(0, idx::kAccelBias).setIdentity();
  if (frame == ForceFrame::kBody) {
    out.r = a_m - (thrust + x.force + x.ba);
    out.H.block<3, 3>(0, idx::kForce).setIdentity();
  } else {
    const Mat3 R = x.q.R();
    const Vec3 f_body = R * x.force;
    out.r = a_m - (thrust + f_body + x.ba);
    // R = Exp(-dtheta) R_hat  =>  R F ~= R_hat F + [R_hat F]x dtheta
    out.H.block<3, 3>(0, idx::kTheta) = skew(f_body);
    out.H.block<3, 3>(0, idx::kForce) = R;
  }
  return out;
}

UpdateResult update_with_accel(FilterState& state, const Vec3& a_m, const Vec3& thrust,
                               const AccelNoise& noise, ForceFrame frame,
                               std::optional<double> gate_prob) {
  const AccelResidual res = accel_residual(state.imu, a_m, thrust, frame);
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(3, state.dim());
  H.leftCols<idx::kImuDim>() = res.H;
  const Eigen::Matrix3d R = Eigen::Matrix3d::Identity() * noise.sigma_a * noise.sigma_a;
  return apply_ekf_update(state, H, res.r, R, gate_prob);
}

}  // namespace forcekf
