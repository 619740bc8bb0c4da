#pragma once

#include <cmath>
#include <random>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include "forcekf/filter_state.hpp"
#include "forcekf/so3.hpp"

namespace forcekf::testing {

inline Vec3 randn3(std::mt19937_64& rng, double sigma = 1.0) {
  std::normal_distribution<double> n(0.0, sigma);
  return Vec3(n(rng), n(rng), n(rng));
}

inline UnitQuaternion random_quat(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Vector4d v(n(rng), n(rng), n(rng), n(rng));
  v.normalize();
  return UnitQuaternion::from_wxyz(v[0], v[1], v[2], v[3]);
}

inline ImuState random_imu_state(std::mt19937_64& rng) {
  ImuState x;
  x.q = random_quat(rng);
  x.p = randn3(rng, 3.0);
  x.v = randn3(rng, 2.0);
  x.bg = randn3(rng, 0.01);
  x.ba = randn3(rng, 0.1);
  x.force = randn3(rng, 1.0);
  return x;
}

/// Random symmetric positive definite matrix with eigenvalues in [lo, hi].
inline Eigen::MatrixXd random_spd(std::mt19937_64& rng, int n, double lo = 0.1, double hi = 2.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd A(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) A(i, j) = g(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  const Eigen::MatrixXd Q = qr.householderQ();
  Eigen::VectorXd d(n);
  for (int i = 0; i < n; ++i) d[i] = u(rng);
  return Q * d.asDiagonal() * Q.transpose();
}

inline double min_eigenvalue(const Eigen::MatrixXd& P) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(P).eigenvalues().minCoeff();
}

}  // namespace forcekf::testing
