#include "forcekf/vision_update.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <Eigen/QR>

#include "forcekf/errors.hpp"

namespace forcekf {

namespace {

constexpr double kMinZ = 1e-6;

Eigen::Matrix<double, 2, 3> projection_jacobian(const Vec3& p_c, const CameraModel& cam) {
  const double iz = 1.0 / p_c.z();
  Eigen::Matrix<double, 2, 3> J;
  J << cam.fx * iz, 0.0, -cam.fx * p_c.x() * iz * iz,
       0.0, cam.fy * iz, -cam.fy * p_c.y() * iz * iz;
  return J;
}

Eigen::Vector2d project(const Vec3& p_c, const CameraModel& cam) {
  return {cam.fx * p_c.x() / p_c.z() + cam.cx, cam.fy * p_c.y() / p_c.z() + cam.cy};
}

// Reprojection cost of `p_f`; infinity if any observation ends up behind
// its camera.
double reprojection_cost(const Vec3& p_f, const FeatureTrack& track,
                         const std::vector<const PoseClone*>& poses, const CameraModel& cam) {
  double cost = 0.0;
  for (std::size_t j = 0; j < poses.size(); ++j) {
    const Vec3 p_c = to_camera(p_f, *poses[j], cam);
    if (p_c.z() <= kMinZ) return std::numeric_limits<double>::infinity();
    const auto& o = track.observations[j];
    cost += (Eigen::Vector2d(o.u, o.v) - project(p_c, cam)).squaredNorm();
  }
  return cost;
}

const PoseClone* find_clone(const std::vector<PoseClone>& clones, double t) {
  for (const auto& c : clones) {
    if (std::abs(c.timestamp - t) <= 1e-9) return &c;
  }
  return nullptr;
}

}  // namespace

Vec3 to_camera(const Vec3& p_f, const PoseClone& clone, const CameraModel& cam) {
  const Vec3 p_i = clone.q.R() * (p_f - clone.p);
  return cam.R_IC * (p_i - cam.p_IC);
}

std::optional<Eigen::Vector2d> project_pinhole(const Vec3& p_f, const PoseClone& clone,
                                               const CameraModel& cam) {
  const Vec3 p_c = to_camera(p_f, clone, cam);
  if (p_c.z() <= kMinZ) return std::nullopt;
  return project(p_c, cam);
}

TriangulationResult triangulate(const FeatureTrack& track, const std::vector<PoseClone>& clones,
                                const CameraModel& cam, const TriangulationOptions& opts) {
  TriangulationResult out;
  const auto fail = [&out](TriangulationFailure f) {
    out.point.reset();
    out.failure = f;
    return out;
  };
  if (track.observations.size() < 2) return fail(TriangulationFailure::kTooFewObservations);

  std::vector<const PoseClone*> poses;
  poses.reserve(track.observations.size());
  for (const auto& o : track.observations) {
    const PoseClone* c = find_clone(clones, o.t);
    if (c == nullptr) return fail(TriangulationFailure::kMissingClone);
    poses.push_back(c);
  }

  // Camera centres and world-frame bearings.
  std::vector<Vec3> centres;
  Mat3 A = Mat3::Zero();
  Vec3 b = Vec3::Zero();
  for (std::size_t j = 0; j < poses.size(); ++j) {
    const Mat3 R_CW = cam.R_IC * poses[j]->q.R();
    const Vec3 centre = poses[j]->p + poses[j]->q.R().transpose() * cam.p_IC;
    const auto& o = track.observations[j];
    const Vec3 bearing_c((o.u - cam.cx) / cam.fx, (o.v - cam.cy) / cam.fy, 1.0);
    const Vec3 bearing_w = (R_CW.transpose() * bearing_c).normalized();
    const Mat3 proj = Mat3::Identity() - bearing_w * bearing_w.transpose();
    A += proj;
    b += proj * centre;
    centres.push_back(centre);
  }
  const Eigen::FullPivLU<Mat3> lu(A);
  if (lu.rank() < 3) return fail(TriangulationFailure::kSingular);
  Vec3 p = lu.solve(b);

  // Gauss-Newton with step rejection on the pixel reprojection error.
  double cost = reprojection_cost(p, track, poses, cam);
  if (!std::isfinite(cost)) return fail(TriangulationFailure::kDepthOutOfRange);
  int increases = 0;
  double lambda = 0.0;
  for (int it = 0; it < opts.max_iterations; ++it) {
    Mat3 JtJ = Mat3::Zero();
    Vec3 Jtr = Vec3::Zero();
    for (std::size_t j = 0; j < poses.size(); ++j) {
      const Mat3 R_CW = cam.R_IC * poses[j]->q.R();
      const Vec3 p_c = to_camera(p, *poses[j], cam);
      const Eigen::Matrix<double, 2, 3> J = projection_jacobian(p_c, cam) * R_CW;
      const auto& o = track.observations[j];
      const Eigen::Vector2d r = Eigen::Vector2d(o.u, o.v) - project(p_c, cam);
      JtJ += J.transpose() * J;
      Jtr += J.transpose() * r;
    }
    JtJ.diagonal() *= (1.0 + lambda);
    const Vec3 step = JtJ.ldlt().solve(Jtr);
    if (!step.allFinite()) return fail(TriangulationFailure::kSingular);
    if (step.norm() < opts.step_tolerance) break;
    const Vec3 candidate = p + step;
    const double new_cost = reprojection_cost(candidate, track, poses, cam);
    // Increases at rounding level mean the minimum has been reached.
    if (new_cost > cost && new_cost <= cost * (1.0 + 1e-9) + 1e-18) break;
    if (new_cost > cost) {
      if (++increases >= 2) return fail(TriangulationFailure::kDiverged);
      lambda = lambda == 0.0 ? 1e-3 : lambda * 10.0;
      continue;
    }
    p = candidate;
    cost = new_cost;
    if (step.norm() < opts.step_tolerance) break;
  }

  // Geometry checks on the refined point.
  double depth_sum = 0.0;
  for (std::size_t j = 0; j < poses.size(); ++j) {
    const double z = to_camera(p, *poses[j], cam).z();
    if (z < opts.min_depth || z > opts.max_depth) return fail(TriangulationFailure::kDepthOutOfRange);
    depth_sum += z;
  }
  double baseline = 0.0;
  for (std::size_t i = 0; i < centres.size(); ++i) {
    for (std::size_t j = i + 1; j < centres.size(); ++j) {
      baseline = std::max(baseline, (centres[i] - centres[j]).norm());
    }
  }
  const double mean_depth = depth_sum / static_cast<double>(poses.size());
  if (baseline / mean_depth < opts.min_baseline_ratio) return fail(TriangulationFailure::kLowParallax);

  out.point = p;
  return out;
}

FeatureLinearization feature_linearize(const FilterState& state, const Vec3& p_f,
                                       const FeatureTrack& track, const CameraModel& cam) {
  const int m = static_cast<int>(track.observations.size());
  FeatureLinearization lin;
  lin.H_x = Eigen::MatrixXd::Zero(2 * m, state.dim());
  lin.H_f = Eigen::MatrixXd::Zero(2 * m, 3);
  lin.r = Eigen::VectorXd::Zero(2 * m);
  for (int j = 0; j < m; ++j) {
    const auto& o = track.observations[j];
    const auto ci = state.find_clone(o.t);
    if (!ci) {
      throw PreconditionError("vision_update", "observation of feature " + std::to_string(track.id) +
                                                   " has no live clone");
    }
    const PoseClone& clone = state.clones[*ci];
    const Mat3 R = clone.q.R();
    const Vec3 p_i = R * (p_f - clone.p);
    const Vec3 p_c = cam.R_IC * (p_i - cam.p_IC);
    const Eigen::Matrix<double, 2, 3> Jp = projection_jacobian(p_c, cam);
    const int o_clone = state.clone_offset(*ci);

    lin.r.segment<2>(2 * j) = Eigen::Vector2d(o.u, o.v) - project(p_c, cam);
    lin.H_x.block<2, 3>(2 * j, o_clone) = Jp * cam.R_IC * skew(p_i);
    lin.H_x.block<2, 3>(2 * j, o_clone + 3) = -Jp * cam.R_IC * R;
    lin.H_f.block<2, 3>(2 * j, 0) = Jp * cam.R_IC * R;
  }
  return lin;
}

std::optional<ProjectedMeasurement> nullspace_project(const Eigen::MatrixXd& H_x,
                                                      const Eigen::MatrixXd& H_f,
                                                      const Eigen::VectorXd& r) {
  const int rows = static_cast<int>(H_f.rows());
  const int fcols = static_cast<int>(H_f.cols());
  if (rows <= fcols) return std::nullopt;

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(H_f);
  const Eigen::MatrixXd R = qr.matrixQR().topRows(fcols).triangularView<Eigen::Upper>();
  const double scale = std::max(1.0, R.cwiseAbs().maxCoeff());
  for (int i = 0; i < fcols; ++i) {
    if (std::abs(R(i, i)) < 1e-9 * scale) return std::nullopt;
  }

  const auto Qt = qr.householderQ().transpose();
  ProjectedMeasurement out;
  const Eigen::MatrixXd QtHx = Qt * H_x;
  const Eigen::VectorXd Qtr = Qt * r;
  out.H = QtHx.bottomRows(rows - fcols);
  out.r = Qtr.tail(rows - fcols);
  return out;
}

void compress_measurement(Eigen::MatrixXd& H, Eigen::VectorXd& r) {
  if (H.rows() <= H.cols()) return;
  const int n = static_cast<int>(H.cols());
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(H);
  const Eigen::VectorXd Qtr = qr.householderQ().transpose() * r;
  H = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
  r = Qtr.head(n);
}

VisualUpdater::VisualUpdater(CameraModel cam, VisionOptions opts)
    : cam_(std::move(cam)), opts_(std::move(opts)) {}

namespace {

bool passes_gate(const FilterState& state, const Eigen::MatrixXd& H, const Eigen::VectorXd& r,
                 double sigma_px, double gate_prob) {
  Eigen::MatrixXd S = H * state.P * H.transpose();
  S.diagonal().array() += sigma_px * sigma_px;
  const Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) return false;
  const double chi2 = r.dot(llt.solve(r));
  return chi2 <= chi2_quantile(gate_prob, static_cast<int>(r.size()));
}

void stack_rows(Eigen::MatrixXd& H, Eigen::VectorXd& r, const Eigen::MatrixXd& H_new,
                const Eigen::VectorXd& r_new) {
  const auto n = H.rows();
  H.conservativeResize(n + H_new.rows(), H_new.cols());
  r.conservativeResize(n + r_new.size());
  H.bottomRows(H_new.rows()) = H_new;
  r.tail(r_new.size()) = r_new;
}

}  // namespace

FrameStats VisualUpdater::update_with_frame(FilterState& state, const CameraFrame& frame) {
  FrameStats stats;
  clone_pose(state, frame.t);

  // Route observations: SLAM landmarks are updated directly, everything else
  // extends its track.
  std::set<std::int64_t> seen;
  std::vector<FeatureObservation> slam_obs;
  for (const auto& f : frame.features) {
    if (!seen.insert(f.id).second) continue;
    if (state.find_landmark(f.id)) {
      slam_obs.push_back(f);
      continue;
    }
    auto& track = tracks_[f.id];
    track.id = f.id;
    track.observations.push_back({frame.t, f.u, f.v});
  }

  const bool window_full = static_cast<int>(state.clones.size()) > opts_.window_size;
  const double oldest = state.clones.front().timestamp;

  // Tracks that ended, or that reach back to the clone about to leave.
  std::vector<std::int64_t> candidates;
  std::vector<std::int64_t> spanning_alive;
  for (const auto& [id, track] : tracks_) {
    const bool lost = !seen.contains(id);
    const bool spans = window_full && std::abs(track.observations.front().t - oldest) <= 1e-9;
    if (lost || spans) candidates.push_back(id);
    if (spans && !lost) spanning_alive.push_back(id);
  }

  std::set<std::int64_t> to_promote;
  const int slam_room = opts_.max_slam_features - static_cast<int>(state.landmarks.size());
  if (slam_room > 0 && !spanning_alive.empty()) {
    std::stable_sort(spanning_alive.begin(), spanning_alive.end(), [this](auto a, auto b) {
      return tracks_.at(a).observations.size() > tracks_.at(b).observations.size();
    });
    for (int i = 0; i < slam_room && i < static_cast<int>(spanning_alive.size()); ++i) {
      to_promote.insert(spanning_alive[i]);
    }
  }

  // MSCKF update.
  Eigen::MatrixXd H_stack(0, state.dim());
  Eigen::VectorXd r_stack(0);
  for (const auto id : candidates) {
    if (to_promote.contains(id)) continue;
    const FeatureTrack& track = tracks_.at(id);
    if (static_cast<int>(track.observations.size()) < opts_.min_track_length) continue;
    ++stats.msckf_candidates;
    const auto tri = triangulate(track, state.clones, cam_, opts_.triangulation);
    if (!tri) {
      ++stats.triangulation_failures;
      continue;
    }
    const auto lin = feature_linearize(state, *tri.point, track, cam_);
    const auto proj = nullspace_project(lin.H_x, lin.H_f, lin.r);
    if (!proj) {
      ++stats.triangulation_failures;
      continue;
    }
    if (!passes_gate(state, proj->H, proj->r, opts_.sigma_px, opts_.gate_prob)) {
      ++stats.gate_rejections;
      continue;
    }
    stack_rows(H_stack, r_stack, proj->H, proj->r);
    ++stats.msckf_used;
  }
  if (H_stack.rows() > 0) {
    compress_measurement(H_stack, r_stack);
    const Eigen::MatrixXd R =
        Eigen::MatrixXd::Identity(r_stack.size(), r_stack.size()) * opts_.sigma_px * opts_.sigma_px;
    stats.update_applied = apply_ekf_update(state, H_stack, r_stack, R, std::nullopt).accepted();
  }

  if (opts_.max_slam_features > 0) {
    update_slam_landmarks(state, slam_obs, stats);
    for (const auto id : to_promote) {
      if (promote_to_landmark(state, tracks_.at(id))) ++stats.slam_promoted;
    }
    // Landmarks that were not observed in this frame leave the state.
    for (std::size_t j = state.landmarks.size(); j-- > 0;) {
      const auto id = state.landmarks[j].id;
      if (!seen.contains(id)) {
        marginalize_landmark(state, j);
        ++stats.slam_marginalized;
      }
    }
  }

  for (const auto id : candidates) tracks_.erase(id);

  if (window_full) {
    marginalize_oldest_clone(state, opts_.window_size);
    for (auto& [id, track] : tracks_) {
      auto& obs = track.observations;
      obs.erase(std::remove_if(obs.begin(), obs.end(),
                               [oldest](const TrackObservation& o) { return std::abs(o.t - oldest) <= 1e-9; }),
                obs.end());
    }
    std::erase_if(tracks_, [](const auto& kv) { return kv.second.observations.empty(); });
  }
  return stats;
}

void VisualUpdater::update_slam_landmarks(FilterState& state,
                                          const std::vector<FeatureObservation>& obs,
                                          FrameStats& stats) const {
  if (obs.empty()) return;
  const auto ci = state.find_clone(state.time);
  if (!ci) return;
  Eigen::MatrixXd H_stack(0, state.dim());
  Eigen::VectorXd r_stack(0);
  for (const auto& o : obs) {
    const auto j = state.find_landmark(o.id);
    if (!j) continue;
    FeatureTrack single{o.id, {{state.time, o.u, o.v}}};
    const Vec3 p_c = to_camera(state.landmarks[*j].p_f, state.clones[*ci], cam_);
    if (p_c.z() <= opts_.triangulation.min_depth) continue;
    auto lin = feature_linearize(state, state.landmarks[*j].p_f, single, cam_);
    lin.H_x.middleCols<3>(state.landmark_offset(*j)) = lin.H_f;
    if (!passes_gate(state, lin.H_x, lin.r, opts_.sigma_px, opts_.gate_prob)) {
      ++stats.gate_rejections;
      continue;
    }
    stack_rows(H_stack, r_stack, lin.H_x, lin.r);
    ++stats.slam_updated;
  }
  if (H_stack.rows() == 0) return;
  compress_measurement(H_stack, r_stack);
  const Eigen::MatrixXd R =
      Eigen::MatrixXd::Identity(r_stack.size(), r_stack.size()) * opts_.sigma_px * opts_.sigma_px;
  apply_ekf_update(state, H_stack, r_stack, R, std::nullopt);
}

bool VisualUpdater::promote_to_landmark(FilterState& state, const FeatureTrack& track) const {
  if (static_cast<int>(track.observations.size()) < opts_.min_track_length) return false;
  const auto tri = triangulate(track, state.clones, cam_, opts_.triangulation);
  if (!tri) return false;
  const auto lin = feature_linearize(state, *tri.point, track, cam_);
  const int rows = static_cast<int>(lin.r.size());
  if (rows <= 3) return false;

  // Split the system into the part that fixes the landmark (top 3 rows after
  // QR of H_f) and the part that constrains the rest of the state.
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(lin.H_f);
  const auto Qt = qr.householderQ().transpose();
  const Eigen::MatrixXd QtHx = Qt * lin.H_x;
  const Eigen::VectorXd Qtr = Qt * lin.r;
  const Mat3 R1 = qr.matrixQR().topRows<3>().triangularView<Eigen::Upper>();
  if (std::abs(R1.determinant()) < 1e-12) return false;
  const Eigen::MatrixXd Hx1 = QtHx.topRows(3);
  const Eigen::VectorXd r1 = Qtr.head(3);
  const Eigen::MatrixXd Hx2 = QtHx.bottomRows(rows - 3);
  const Eigen::VectorXd r2 = Qtr.tail(rows - 3);
  if (!passes_gate(state, Hx2, r2, opts_.sigma_px, opts_.gate_prob)) return false;

  // Delayed initialization: df = R1^-1 (r1 - Hx1 dx - n1).
  const Mat3 R1inv = R1.inverse();
  const double var = opts_.sigma_px * opts_.sigma_px;
  const Eigen::MatrixXd PHx1t = state.P * Hx1.transpose();
  const Eigen::MatrixXd P_xf = -PHx1t * R1inv.transpose();
  const Mat3 P_ff = R1inv * (Hx1 * PHx1t + var * Eigen::MatrixXd::Identity(3, 3)) * R1inv.transpose();
  const Vec3 p_f = *tri.point + R1inv * r1;
  augment_landmark(state, Landmark{track.id, p_f}, P_xf, P_ff);

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(rows - 3, state.dim());
  H.leftCols(Hx2.cols()) = Hx2;
  Eigen::VectorXd r = r2;
  compress_measurement(H, r);
  const Eigen::MatrixXd R = Eigen::MatrixXd::Identity(r.size(), r.size()) * var;
  apply_ekf_update(state, H, r, R, std::nullopt);
  return true;
}

}  // namespace forcekf
