#include "forcekf/filter_state.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <string>

#include <Eigen/Cholesky>
#include <boost/math/distributions/chi_squared.hpp>

#include "forcekf/errors.hpp"

namespace forcekf {

ImuState boxplus(const ImuState& x, const Eigen::Matrix<double, 18, 1>& dx) {
  ImuState out = x;
  out.q = boxplus(x.q, dx.segment<3>(idx::kTheta));
  out.p += dx.segment<3>(idx::kPos);
  out.v += dx.segment<3>(idx::kVel);
  out.bg += dx.segment<3>(idx::kGyroBias);
  out.ba += dx.segment<3>(idx::kAccelBias);
  out.force += dx.segment<3>(idx::kForce);
  return out;
}

Eigen::Matrix<double, 18, 1> boxminus(const ImuState& a, const ImuState& b) {
  Eigen::Matrix<double, 18, 1> d;
  d.segment<3>(idx::kTheta) = boxminus(a.q, b.q);
  d.segment<3>(idx::kPos) = a.p - b.p;
  d.segment<3>(idx::kVel) = a.v - b.v;
  d.segment<3>(idx::kGyroBias) = a.bg - b.bg;
  d.segment<3>(idx::kAccelBias) = a.ba - b.ba;
  d.segment<3>(idx::kForce) = a.force - b.force;
  return d;
}

std::optional<std::size_t> FilterState::find_clone(double t, double tol) const {
  for (std::size_t i = 0; i < clones.size(); ++i) {
    if (std::abs(clones[i].timestamp - t) <= tol) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> FilterState::find_landmark(std::int64_t id) const {
  for (std::size_t j = 0; j < landmarks.size(); ++j) {
    if (landmarks[j].id == id) return j;
  }
  return std::nullopt;
}

FilterState init_filter(const InitialStd& sigma, const UnitQuaternion& q0, const Vec3& p0,
                        const Vec3& v0, double t0) {
  const std::pair<const char*, double> entries[] = {
      {"init.sigma_theta", sigma.theta}, {"init.sigma_p", sigma.p},   {"init.sigma_v", sigma.v},
      {"init.sigma_bw", sigma.bg},       {"init.sigma_ba", sigma.ba}, {"init.sigma_f", sigma.force}};
  for (const auto& [key, value] : entries) {
    if (!(value > 0.0) || !std::isfinite(value)) {
      throw ConfigError("filter_state", std::string(key) + " must be positive");
    }
  }

  FilterState s;
  s.imu.q = q0;
  s.imu.p = p0;
  s.imu.v = v0;
  s.time = t0;
  s.P = Eigen::MatrixXd::Zero(idx::kImuDim, idx::kImuDim);
  int block = 0;
  for (const auto& [key, value] : entries) {
    s.P.block<3, 3>(3 * block, 3 * block) = Eigen::Matrix3d::Identity() * value * value;
    ++block;
  }
  return s;
}

namespace {

// Returns a copy of P with `k` zero rows/cols inserted at `at`.
Eigen::MatrixXd insert_rows_cols(const Eigen::MatrixXd& P, int at, int k) {
  const int d = static_cast<int>(P.rows());
  const int tail = d - at;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(d + k, d + k);
  out.topLeftCorner(at, at) = P.topLeftCorner(at, at);
  out.topRightCorner(at, tail) = P.topRightCorner(at, tail);
  out.bottomLeftCorner(tail, at) = P.bottomLeftCorner(tail, at);
  out.bottomRightCorner(tail, tail) = P.bottomRightCorner(tail, tail);
  return out;
}

// Returns a copy of P with rows/cols [at, at + k) removed.
Eigen::MatrixXd remove_rows_cols(const Eigen::MatrixXd& P, int at, int k) {
  const int d = static_cast<int>(P.rows());
  const int tail = d - at - k;
  Eigen::MatrixXd out(d - k, d - k);
  out.topLeftCorner(at, at) = P.topLeftCorner(at, at);
  out.topRightCorner(at, tail) = P.topRightCorner(at, tail);
  out.bottomLeftCorner(tail, at) = P.bottomLeftCorner(tail, at);
  out.bottomRightCorner(tail, tail) = P.bottomRightCorner(tail, tail);
  return out;
}

}  // namespace

void clone_pose(FilterState& state, double t) {
  if (std::abs(state.time - t) > 1e-9) {
    throw PreconditionError("filter_state", "clone_pose: filter time does not match clone time");
  }
  if (!state.clones.empty() && t <= state.clones.back().timestamp) {
    throw PreconditionError("filter_state", "clone_pose: clone timestamps must increase");
  }
  const int at = state.clone_offset(state.clones.size());
  Eigen::MatrixXd P = insert_rows_cols(state.P, at, idx::kCloneDim);
  const int d = static_cast<int>(P.rows());

  // The clone duplicates (theta, p), which occupy error indices [0, 6).
  for (int c = 0; c < d; ++c) {
    if (c >= at && c < at + idx::kCloneDim) continue;
    P.block(at, c, idx::kCloneDim, 1) = P.block(0, c, idx::kCloneDim, 1);
    P.block(c, at, 1, idx::kCloneDim) = P.block(c, 0, 1, idx::kCloneDim);
  }
  P.block(at, at, idx::kCloneDim, idx::kCloneDim) = P.block(0, 0, idx::kCloneDim, idx::kCloneDim);
  state.P = std::move(P);
  state.clones.push_back(PoseClone{state.imu.q, state.imu.p, t});
}

void marginalize_oldest_clone(FilterState& state, int window_size) {
  if (static_cast<int>(state.clones.size()) != window_size + 1) {
    throw PreconditionError("filter_state", "marginalize_oldest_clone requires window_size + 1 clones, have " +
                                                std::to_string(state.clones.size()));
  }
  state.P = remove_rows_cols(state.P, state.clone_offset(0), idx::kCloneDim);
  state.clones.erase(state.clones.begin());
}

void marginalize_landmark(FilterState& state, std::size_t j) {
  if (j >= state.landmarks.size()) {
    throw PreconditionError("filter_state", "marginalize_landmark: index out of range");
  }
  state.P = remove_rows_cols(state.P, state.landmark_offset(j), idx::kLandmarkDim);
  state.landmarks.erase(state.landmarks.begin() + static_cast<std::ptrdiff_t>(j));
}

void augment_landmark(FilterState& state, const Landmark& lm, const Eigen::MatrixXd& P_xf,
                      const Eigen::Matrix3d& P_ff) {
  const int d = state.dim();
  if (P_xf.rows() != d || P_xf.cols() != 3) {
    throw PreconditionError("filter_state", "augment_landmark: cross covariance has wrong shape");
  }
  Eigen::MatrixXd P = insert_rows_cols(state.P, d, idx::kLandmarkDim);
  P.block(0, d, d, 3) = P_xf;
  P.block(d, 0, 3, d) = P_xf.transpose();
  P.block<3, 3>(d, d) = P_ff;
  symmetrize(P);
  state.P = std::move(P);
  state.landmarks.push_back(lm);
}

void apply_correction(FilterState& state, const Eigen::VectorXd& dx) {
  state.imu = boxplus(state.imu, dx.head<idx::kImuDim>());
  for (std::size_t i = 0; i < state.clones.size(); ++i) {
    const int o = state.clone_offset(i);
    state.clones[i].q = boxplus(state.clones[i].q, dx.segment<3>(o));
    state.clones[i].p += dx.segment<3>(o + 3);
  }
  for (std::size_t j = 0; j < state.landmarks.size(); ++j) {
    state.landmarks[j].p_f += dx.segment<3>(state.landmark_offset(j));
  }
}

void symmetrize(Eigen::MatrixXd& P) {
  P = 0.5 * (P + P.transpose()).eval();
}

double chi2_quantile(double prob, int dof) {
  static std::mutex mutex;
  static std::map<std::pair<double, int>, double> cache;
  const std::lock_guard<std::mutex> lock(mutex);
  const auto key = std::make_pair(prob, dof);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  const boost::math::chi_squared dist(static_cast<double>(dof));
  const double value = boost::math::quantile(dist, prob);
  cache.emplace(key, value);
  return value;
}

UpdateResult apply_ekf_update(FilterState& state, const Eigen::MatrixXd& H,
                              const Eigen::VectorXd& r, const Eigen::MatrixXd& R,
                              std::optional<double> gate_prob) {
  const int d = state.dim();
  if (H.cols() != d || H.rows() != r.size() || R.rows() != r.size() || R.cols() != r.size()) {
    throw PreconditionError("filter_state", "apply_ekf_update: inconsistent dimensions");
  }

  const Eigen::MatrixXd PHt = state.P * H.transpose();
  Eigen::MatrixXd S = H * PHt + R;
  S = 0.5 * (S + S.transpose()).eval();
  const Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    throw NumericalError("filter_state", "innovation covariance is not positive definite");
  }

  UpdateResult result;
  result.mahalanobis = r.dot(llt.solve(r));
  if (gate_prob) {
    result.threshold = chi2_quantile(*gate_prob, static_cast<int>(r.size()));
    if (!(result.mahalanobis <= result.threshold)) {
      result.status = UpdateStatus::kRejected;
      return result;
    }
  }

  // K = P H^T S^-1
  const Eigen::MatrixXd K = llt.solve(PHt.transpose()).transpose();
  const Eigen::VectorXd dx = K * r;
  if (!dx.allFinite()) {
    throw NumericalError("filter_state", "non-finite state correction");
  }

  // Joseph form (I - KH) P (I - KH)^T + K R K^T, expanded so that it costs
  // O(d^2 m) instead of O(d^3).
  const Eigen::MatrixXd KPHt = K * PHt.transpose();
  Eigen::MatrixXd P = state.P - KPHt - KPHt.transpose() + K * S * K.transpose();
  symmetrize(P);

  apply_correction(state, dx);
  state.P = std::move(P);
  return result;
}

}  // namespace forcekf
