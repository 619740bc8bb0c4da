#include "forcekf/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <spdlog/spdlog.h>

#include "forcekf/accel_update.hpp"
#include "forcekf/errors.hpp"
#include "forcekf/propagation.hpp"
#include "forcekf/vision_update.hpp"

namespace forcekf {

namespace {

constexpr double kTieTolerance = 1e-6;
constexpr double kThrustMatchTolerance = 1e-3;

/// Thrust at arbitrary times: the nearest sample when within 1 ms, linear
/// interpolation otherwise.
class ThrustLookup {
 public:
  explicit ThrustLookup(const std::vector<ThrustSample>& s) : s_(s) {}

  Vec3 at(double t) const {
    const auto it = std::lower_bound(s_.begin(), s_.end(), t,
                                     [](const ThrustSample& a, double v) { return a.t < v; });
    if (it != s_.end() && it->t - t <= kThrustMatchTolerance) {
      if (it != s_.begin() && t - std::prev(it)->t < it->t - t) return std::prev(it)->thrust;
      return it->thrust;
    }
    if (it != s_.begin() && t - std::prev(it)->t <= kThrustMatchTolerance) return std::prev(it)->thrust;
    if (it == s_.begin() || it == s_.end()) {
      throw DataError("dataset_io", "no thrust sample near t=" + std::to_string(t));
    }
    const auto& a = *std::prev(it);
    const auto& b = *it;
    const double w = (t - a.t) / (b.t - a.t);
    return (1.0 - w) * a.thrust + w * b.thrust;
  }

 private:
  const std::vector<ThrustSample>& s_;
};

/// Roll and pitch from the mean specific force over the first half second;
/// yaw is unobservable and set to zero.
UnitQuaternion gravity_alignment(const std::vector<ImuSample>& imu, const Vec3& gravity) {
  Vec3 mean = Vec3::Zero();
  int n = 0;
  for (const auto& s : imu) {
    if (s.t - imu.front().t > 0.5) break;
    mean += s.accel;
    ++n;
  }
  mean /= n;
  if (mean.norm() < 1e-6) throw DataError("estimator", "cannot align to gravity: zero specific force");
  // At rest the accelerometer measures R_IW * (-g).
  const Vec3 up_world = -gravity.normalized();
  const Vec3 up_body = mean.normalized();
  const Eigen::Quaterniond q_wi = Eigen::Quaterniond::FromTwoVectors(up_body, up_world);
  return UnitQuaternion::from_rotation(q_wi.toRotationMatrix().transpose());
}

EstimateSample snapshot(const FilterState& s, ForceFrame frame) {
  EstimateSample out;
  out.t = s.time;
  out.x = s.imu;
  out.P = s.P.topLeftCorner<18, 18>();
  if (frame == ForceFrame::kWorld) {
    // F_I = R F_W; a perturbation R -> Exp(-dth) R moves it by [R F_W]x dth.
    const Mat3 R = s.imu.q.R();
    out.x.force = R * s.imu.force;
    Mat18 J = Mat18::Identity();
    J.block<3, 3>(idx::kForce, idx::kForce) = R;
    J.block<3, 3>(idx::kForce, idx::kTheta) = skew(out.x.force);
    out.P = J * out.P * J.transpose();
  }
  return out;
}

class EventLoop {
 public:
  EventLoop(const DatasetStreams& streams, const EstimatorConfig& cfg, const EstimatorOptions& opts)
      : streams_(streams),
        cfg_(cfg),
        opts_(opts),
        thrust_(streams.thrust),
        vision_(cfg.camera, cfg.vision_options()) {}

  EstimatorOutput run() {
    const auto& imu = streams_.imu;
    if (imu.size() < 2) throw DataError("estimator", "need at least two IMU samples");
    initialize();

    std::size_t f = 0;
    const auto& frames = streams_.frames;
    while (f < frames.size() && frames[f].t < imu.front().t - kTieTolerance) {
      ++out_.stats.frames_skipped;
      ++f;
    }
    accel_update(imu.front());
    while (f < frames.size() && std::abs(frames[f].t - state_.time) <= kTieTolerance) camera_update(frames[f++]);
    if (cfg_.cadence == OutputCadence::kImu) emit();

    for (std::size_t k = 0; k + 1 < imu.size(); ++k) {
      const ImuSample& a = imu[k];
      const ImuSample& b = imu[k + 1];
      PropagationInput u;
      u.omega_m = 0.5 * (a.omega + b.omega);
      u.thrust = 0.5 * (thrust_.at(a.t) + thrust_.at(b.t));

      // Camera frames strictly inside the interval split it.
      while (f < frames.size() && frames[f].t < b.t - kTieTolerance) {
        propagate_to(frames[f].t, u);
        camera_update(frames[f++]);
      }
      propagate_to(b.t, u);
      ++out_.stats.imu_steps;
      accel_update(b);
      while (f < frames.size() && std::abs(frames[f].t - b.t) <= kTieTolerance) camera_update(frames[f++]);
      if (cfg_.cadence == OutputCadence::kImu) emit();
    }
    out_.stats.frames_skipped += static_cast<int>(frames.size() - f);
    spdlog::debug("estimator: {} imu steps, {} frames, {} vision updates, {} accel rejections",
                  out_.stats.imu_steps, out_.stats.frames, out_.stats.vision_updates,
                  out_.stats.accel_rejections);
    return std::move(out_);
  }

 private:
  void initialize() {
    const double t0 = streams_.imu.front().t;
    UnitQuaternion q0 = UnitQuaternion::identity();
    Vec3 p0 = Vec3::Zero();
    Vec3 v0 = Vec3::Zero();
    std::optional<GroundTruthSample> g;
    if (cfg_.init_from_groundtruth && streams_.groundtruth) g = interpolate_groundtruth(*streams_.groundtruth, t0);
    if (g) {
      q0 = g->q;
      p0 = g->p;
      v0 = g->v;
    } else {
      q0 = gravity_alignment(streams_.imu, cfg_.gravity);
    }
    state_ = init_filter(cfg_.initial, q0, p0, v0, t0);
  }

  void propagate_to(double t, const PropagationInput& u_interval) {
    const double dt = t - state_.time;
    if (dt <= 0.0) return;  // sub-microsecond remainder after a camera split
    PropagationInput u = u_interval;
    u.dt = dt;
    propagate(state_, u, cfg_.process, cfg_.gravity, cfg_.force_frame);
    state_.time = t;
  }

  void record(EventKind kind, double t) {
    if (t < state_.time - kTieTolerance) ++out_.stats.ordering_violations;
    if (opts_.audit) out_.audit.push_back({kind, t, state_.time});
  }

  void accel_update(const ImuSample& s) {
    record(EventKind::kImu, s.t);
    if (!cfg_.use_accel_update) return;
    std::optional<double> gate;
    if (cfg_.accel_gate_prob > 0.0) gate = cfg_.accel_gate_prob;
    const auto res = update_with_accel(state_, s.accel, thrust_.at(s.t), cfg_.accel, cfg_.force_frame, gate);
    ++out_.stats.accel_updates;
    if (!res.accepted()) ++out_.stats.accel_rejections;
  }

  void camera_update(const CameraFrame& frame) {
    record(EventKind::kCamera, frame.t);
    ++out_.stats.frames;
    if (!cfg_.use_vision) return;
    // The clone must sit exactly at the camera time.
    state_.time = frame.t;
    const FrameStats fs = vision_.update_with_frame(state_, frame);
    out_.stats.msckf_features += fs.msckf_used;
    out_.stats.slam_promoted += fs.slam_promoted;
    if (fs.update_applied) ++out_.stats.vision_updates;
    if (cfg_.cadence == OutputCadence::kCamera) emit();
  }

  void emit() {
    if (!out_.samples.empty() && !(state_.time > out_.samples.back().t)) return;
    out_.samples.push_back(snapshot(state_, cfg_.force_frame));
  }

  const DatasetStreams& streams_;
  const EstimatorConfig& cfg_;
  const EstimatorOptions& opts_;
  ThrustLookup thrust_;
  VisualUpdater vision_;
  FilterState state_;
  EstimatorOutput out_;
};

}  // namespace

std::optional<GroundTruthSample> interpolate_groundtruth(const std::vector<GroundTruthSample>& gt, double t) {
  if (gt.empty() || t < gt.front().t - kTieTolerance || t > gt.back().t + kTieTolerance) return std::nullopt;
  const auto it = std::lower_bound(gt.begin(), gt.end(), t,
                                   [](const GroundTruthSample& a, double v) { return a.t < v; });
  if (it == gt.end()) return gt.back();
  if (it == gt.begin() || it->t == t) return *it;
  const auto& a = *std::prev(it);
  const auto& b = *it;
  const double w = (t - a.t) / (b.t - a.t);
  GroundTruthSample g;
  g.t = t;
  g.q = UnitQuaternion::from_rotation(
      a.q.eigen().slerp(w, b.q.eigen()).normalized().toRotationMatrix());
  g.p = (1.0 - w) * a.p + w * b.p;
  g.v = (1.0 - w) * a.v + w * b.v;
  g.force = (1.0 - w) * a.force + w * b.force;
  return g;
}

EstimatorOutput run_estimator(const DatasetStreams& streams, const EstimatorConfig& cfg,
                              const EstimatorOptions& options) {
  cfg.validate();
  return EventLoop(streams, cfg, options).run();
}

}  // namespace forcekf
