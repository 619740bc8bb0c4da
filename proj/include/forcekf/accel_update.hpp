#pragma once

#include <optional>

#include <Eigen/Core>

#include "forcekf/filter_state.hpp"
#include "forcekf/propagation.hpp"

namespace forcekf {

struct AccelNoise {
  double sigma_a = 0.05;  // per-axis accelerometer measurement std, m/s^2
};

struct AccelResidual {
  Vec3 r;
  Eigen::Matrix<double, 3, 18> H;
};

/// Residual of a_m = T_m + F_ext + b_a + n_a against the current estimate,
/// with the Jacobian over the 18-dim ImuState error. In world-force mode the
/// predicted measurement is T_m + R F_ext + b_a and H picks up an attitude
/// block.
AccelResidual accel_residual(const ImuState& x, const Vec3& a_m, const Vec3& thrust,
                             ForceFrame frame = ForceFrame::kBody);

/// Accelerometer update at the current filter time. Ungated unless
/// `gate_prob` is given.
UpdateResult update_with_accel(FilterState& state, const Vec3& a_m, const Vec3& thrust,
                               const AccelNoise& noise, ForceFrame frame = ForceFrame::kBody,
                               std::optional<double> gate_prob = std::nullopt);

}  // namespace forcekf
