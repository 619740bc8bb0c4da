#include "forcekf/propagation.hpp"

#include <cmath>
#include <string>

#include "forcekf/errors.hpp"

namespace forcekf {

namespace {

// Attitude and specific-force terms at the three RK4 stage times.
struct Stages {
  Mat3 R[3];       // R(tau) for tau = 0, dt/2, dt
  Mat3 dR[3];      // Exp(-omega * tau)
  Mat3 Jl_tau[3];  // J_l(-omega * tau) * tau
  Vec3 f[3];       // v_dot at the stage
};

Stages evaluate_stages(const ImuState& x, const PropagationInput& u, const Vec3& gravity,
                       ForceFrame frame) {
  const Vec3 omega = u.omega_m - x.bg;
  const Mat3 R0 = x.q.R();
  const double taus[3] = {0.0, 0.5 * u.dt, u.dt};
  Stages s;
  for (int i = 0; i < 3; ++i) {
    const Vec3 phi = -omega * taus[i];
    s.dR[i] = exp_so3(phi);
    s.Jl_tau[i] = left_jacobian(phi) * taus[i];
    s.R[i] = s.dR[i] * R0;
    if (frame == ForceFrame::kBody) {
      s.f[i] = s.R[i].transpose() * (u.thrust + x.force) + gravity;
    } else {
      s.f[i] = s.R[i].transpose() * u.thrust + x.force + gravity;
    }
  }
  return s;
}

}  // namespace

ImuState propagate_mean(const ImuState& x, const PropagationInput& u, const Vec3& gravity,
                        ForceFrame frame) {
  const Stages s = evaluate_stages(x, u, gravity, frame);
  const double dt = u.dt;
  ImuState out = x;
  out.q = integrate_gyro(x.q, u.omega_m - x.bg, dt);
  // v_dot does not depend on v or p, so RK4 reduces to Simpson's rule for v
  // and to the matching closed form for p.
  out.v = x.v + dt / 6.0 * (s.f[0] + 4.0 * s.f[1] + s.f[2]);
  out.p = x.p + dt * x.v + dt * dt / 6.0 * (s.f[0] + 2.0 * s.f[1]);
  return out;
}

Transition compute_phi_qd(const ImuState& x, const PropagationInput& u, const ProcessNoise& noise,
                          ForceFrame frame) {
  const Stages s = evaluate_stages(x, u, Vec3::Zero(), frame);
  const double dt = u.dt;
  const Vec3 a_body = frame == ForceFrame::kBody ? Vec3(u.thrust + x.force) : u.thrust;

  // Stage derivatives of v_dot with respect to theta, b_w and F.
  Mat3 df_dtheta[3], df_dbg[3], df_dF[3];
  for (int i = 0; i < 3; ++i) {
    const Mat3 Rt = s.R[i].transpose();
    df_dtheta[i] = -Rt * skew(a_body) * s.dR[i];
    df_dbg[i] = Rt * skew(a_body) * s.Jl_tau[i];
    df_dF[i] = frame == ForceFrame::kBody ? Rt : Mat3::Identity();
  }
  const auto simpson = [dt](const Mat3 (&m)[3]) -> Mat3 {
    return dt / 6.0 * (m[0] + 4.0 * m[1] + m[2]);
  };
  const auto pos_rule = [dt](const Mat3 (&m)[3]) -> Mat3 {
    return dt * dt / 6.0 * (m[0] + 2.0 * m[1]);
  };

  Transition t;
  Mat18& Phi = t.Phi;
  Phi.setIdentity();
  Phi.block<3, 3>(idx::kTheta, idx::kTheta) = s.dR[2];
  Phi.block<3, 3>(idx::kTheta, idx::kGyroBias) = -s.Jl_tau[2];

  Phi.block<3, 3>(idx::kPos, idx::kTheta) = pos_rule(df_dtheta);
  Phi.block<3, 3>(idx::kPos, idx::kVel) = Mat3::Identity() * dt;
  Phi.block<3, 3>(idx::kPos, idx::kGyroBias) = pos_rule(df_dbg);
  Phi.block<3, 3>(idx::kPos, idx::kForce) = pos_rule(df_dF);

  Phi.block<3, 3>(idx::kVel, idx::kTheta) = simpson(df_dtheta);
  Phi.block<3, 3>(idx::kVel, idx::kGyroBias) = simpson(df_dbg);
  Phi.block<3, 3>(idx::kVel, idx::kForce) = simpson(df_dF);

  Mat18& Qd = t.Qd;
  Qd.setZero();
  const auto diag = [&Qd, dt](int at, double density) {
    Qd.block<3, 3>(at, at) = Mat3::Identity() * density * density * dt;
  };
  diag(idx::kTheta, noise.sigma_w);
  diag(idx::kVel, noise.sigma_t);
  diag(idx::kGyroBias, noise.sigma_bw);
  diag(idx::kAccelBias, noise.sigma_ba);
  diag(idx::kForce, noise.sigma_f);
  return t;
}

void propagate(FilterState& state, const PropagationInput& u, const ProcessNoise& noise,
               const Vec3& gravity, ForceFrame frame) {
  if (!(u.dt > 0.0) || u.dt > 0.1) {
    throw DataError("dynamic_propagation",
                    "propagation interval must lie in (0, 0.1] s, got " + std::to_string(u.dt));
  }
  const Transition tr = compute_phi_qd(state.imu, u, noise, frame);
  const int d = state.dim();
  const int rest = d - idx::kImuDim;

  Eigen::MatrixXd& P = state.P;
  const Mat18 Pii = tr.Phi * P.topLeftCorner<18, 18>() * tr.Phi.transpose() + tr.Qd;
  P.topLeftCorner<18, 18>() = 0.5 * (Pii + Pii.transpose());
  if (rest > 0) {
    P.topRightCorner(idx::kImuDim, rest) = (tr.Phi * P.topRightCorner(idx::kImuDim, rest)).eval();
    P.bottomLeftCorner(rest, idx::kImuDim) = P.topRightCorner(idx::kImuDim, rest).transpose();
  }

  state.imu = propagate_mean(state.imu, u, gravity, frame);
  state.time += u.dt;
}

}  // namespace forcekf
