#pragma once

#include <Eigen/Core>

#include "forcekf/filter_state.hpp"
#include "forcekf/so3.hpp"

namespace forcekf {

/// Continuous-time noise densities of the process model.
struct ProcessNoise {
  double sigma_w = 2.0e-4;   // gyro white noise, rad/s/sqrt(Hz)
  double sigma_bw = 2.0e-5;  // gyro bias random walk, rad/s^2/sqrt(Hz)
  double sigma_ba = 1.0e-3;  // accel bias random walk, m/s^3/sqrt(Hz)
  double sigma_f = 0.22;     // external force random walk, m/s^3/sqrt(Hz)
  double sigma_t = 2.0e-3;   // thrust noise on v_dot, m/s^2*sqrt(s)
};

/// Frame in which the external force is modelled as a random walk.
enum class ForceFrame { kBody, kWorld };

/// Gyro and thrust inputs held constant over `dt`.
struct PropagationInput {
  Vec3 omega_m = Vec3::Zero();  // rad/s
  Vec3 thrust = Vec3::Zero();   // mass-normalized thrust in {I}, m/s^2
  double dt = 0.0;              // s
};

using Mat18 = Eigen::Matrix<double, 18, 18>;

/// Mean propagation of the vehicle state:
///   R_dot = -[omega_m - b_w]x R,  p_dot = v,  v_dot = R^T (T_m + F_ext) + g,
/// biases and force held constant. Attitude is integrated in closed form and
/// velocity/position with classical RK4 using the attitude at the stage times.
ImuState propagate_mean(const ImuState& x, const PropagationInput& u, const Vec3& gravity,
                        ForceFrame frame = ForceFrame::kBody);

struct Transition {
  Mat18 Phi;
  Mat18 Qd;
};

/// Error-state transition matrix of propagate_mean (exact derivative of the
/// discrete integrator under the library's boxplus convention) and the
/// first-order discrete process noise G Qc G^T dt.
Transition compute_phi_qd(const ImuState& x, const PropagationInput& u, const ProcessNoise& noise,
                          ForceFrame frame = ForceFrame::kBody);

/// Propagates mean and covariance by u.dt. Clone and landmark blocks only
/// change through their cross terms with the ImuState block. Throws
/// DataError when u.dt is not in (0, 0.1].
void propagate(FilterState& state, const PropagationInput& u, const ProcessNoise& noise,
               const Vec3& gravity, ForceFrame frame = ForceFrame::kBody);

}  // namespace forcekf
