#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "forcekf/config.hpp"
#include "forcekf/errors.hpp"
#include "forcekf/estimator.hpp"
#include "forcekf/simulator.hpp"

using namespace forcekf;

namespace {

Config scenario(double duration, TrajectoryKind kind = TrajectoryKind::kLemniscate) {
  Config cfg;
  cfg.sim.duration = duration;
  cfg.sim.trajectory = kind;
  return cfg;
}

double max_pos_var(const EstimateSample& s) { return s.P.diagonal().segment<3>(idx::kPos).maxCoeff(); }

}  // namespace

TEST(Estimator, ProcessesMeasurementsInOrder) {
  auto cfg = scenario(6.0);
  cfg.sim.camera_rate = 15.0;  // off the IMU grid
  const auto ds = synthesize(cfg.sim);
  const auto out = run_estimator(ds.streams, cfg.estimator, {.audit = true});
  EXPECT_EQ(out.stats.ordering_violations, 0);
  EXPECT_EQ(out.stats.frames, static_cast<int>(ds.streams.frames.size()));
  EXPECT_EQ(out.stats.imu_steps, static_cast<int>(ds.streams.imu.size()) - 1);
  EXPECT_EQ(out.stats.accel_updates, static_cast<int>(ds.streams.imu.size()));
  ASSERT_EQ(out.audit.size(), ds.streams.imu.size() + ds.streams.frames.size());
  for (std::size_t i = 0; i < out.audit.size(); ++i) {
    const auto& e = out.audit[i];
    // Camera frames split the IMU interval: the filter clock is exactly at
    // the camera time when the frame is applied.
    EXPECT_EQ(e.filter_time, e.measurement_time) << i;
    if (i > 0) EXPECT_GE(e.measurement_time, out.audit[i - 1].measurement_time);
  }
  EXPECT_GT(out.stats.vision_updates, 0);
}

TEST(Estimator, TiesProcessImuFirst) {
  auto cfg = scenario(2.0);
  const auto ds = synthesize(cfg.sim);
  const auto out = run_estimator(ds.streams, cfg.estimator, {.audit = true});
  for (std::size_t i = 1; i < out.audit.size(); ++i) {
    if (out.audit[i].kind == EventKind::kCamera) {
      EXPECT_EQ(out.audit[i - 1].kind, EventKind::kImu);
      EXPECT_EQ(out.audit[i - 1].measurement_time, out.audit[i].measurement_time);
    }
  }
}

TEST(Estimator, OutputCadence) {
  auto cfg = scenario(2.0);
  const auto ds = synthesize(cfg.sim);
  const auto imu = run_estimator(ds.streams, cfg.estimator);
  EXPECT_EQ(imu.samples.size(), ds.streams.imu.size());
  for (std::size_t i = 1; i < imu.samples.size(); ++i) EXPECT_GT(imu.samples[i].t, imu.samples[i - 1].t);
  cfg.estimator.cadence = OutputCadence::kCamera;
  EXPECT_EQ(run_estimator(ds.streams, cfg.estimator).samples.size(), ds.streams.frames.size());
}

TEST(Estimator, CovarianceStaysSymmetricPositive) {
  auto cfg = scenario(5.0);
  const auto out = run_estimator(synthesize(cfg.sim).streams, cfg.estimator);
  for (const auto& s : out.samples) {
    ASSERT_LE((s.P - s.P.transpose()).cwiseAbs().maxCoeff(), 1e-9);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Eigen::MatrixXd(s.P));
    ASSERT_GT(eig.eigenvalues().minCoeff(), 0.0);
  }
}

TEST(Estimator, StepForceIsTrackedWithCorrectSign) {
  auto cfg = scenario(6.0, TrajectoryKind::kHover);
  cfg.sim.step.body = Vec3(1, 0, 0);
  cfg.sim.step.start_time = 2.0;
  const auto out = run_estimator(synthesize(cfg.sim).streams, cfg.estimator);
  for (const auto& s : out.samples) {
    if (s.t > 1.0 && s.t < 2.0) ASSERT_LT(std::abs(s.x.force.x()), 0.2) << s.t;
    if (s.t > 4.0) {
      ASSERT_GE(s.x.force.x(), 0.8) << s.t;
      ASSERT_LE(s.x.force.x(), 1.2) << s.t;
    }
  }
}

TEST(Estimator, VisionBoundsPositionUncertainty) {
  auto cfg = scenario(20.0);
  const auto ds = synthesize(cfg.sim);
  const auto with = run_estimator(ds.streams, cfg.estimator);
  cfg.estimator.use_vision = false;
  const auto without = run_estimator(ds.streams, cfg.estimator);
  const double v_with = max_pos_var(with.samples.back());
  const double v_without = max_pos_var(without.samples.back());
  EXPECT_LT(v_with, 0.05 * 0.05);
  EXPECT_GT(v_without, 10.0 * v_with);
  // Without vision the position variance keeps growing.
  EXPECT_GT(v_without, max_pos_var(without.samples[without.samples.size() / 2]));
}

TEST(Estimator, WorldFrameForceReportedInBody) {
  auto cfg = scenario(10.0);
  const auto ds = synthesize(cfg.sim);
  const auto body = run_estimator(ds.streams, cfg.estimator);
  cfg.estimator.force_frame = ForceFrame::kWorld;
  const auto world = run_estimator(ds.streams, cfg.estimator);
  ASSERT_EQ(body.samples.size(), world.samples.size());
  double sum = 0.0;
  const auto& gt = *ds.streams.groundtruth;
  for (std::size_t i = 0; i < world.samples.size(); ++i) sum += (world.samples[i].x.force - gt[i].force).squaredNorm();
  EXPECT_LT(std::sqrt(sum / world.samples.size()), 0.15);
}

TEST(Estimator, NoSlamLandmarksByDefault) {
  auto cfg = scenario(8.0);
  const auto out = run_estimator(synthesize(cfg.sim).streams, cfg.estimator);
  EXPECT_EQ(out.stats.slam_promoted, 0);
  cfg.estimator.max_slam_features = 5;
  const auto slam = run_estimator(synthesize(cfg.sim).streams, cfg.estimator);
  EXPECT_GT(slam.stats.slam_promoted, 0);
}

TEST(Estimator, Deterministic) {
  auto cfg = scenario(4.0);
  const auto ds = synthesize(cfg.sim);
  const auto a = run_estimator(ds.streams, cfg.estimator);
  const auto b = run_estimator(ds.streams, cfg.estimator);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    ASSERT_TRUE(a.samples[i].x.p == b.samples[i].x.p);
    ASSERT_TRUE(a.samples[i].x.force == b.samples[i].x.force);
    ASSERT_TRUE(a.samples[i].P == b.samples[i].P);
  }
}

TEST(Estimator, GravityAlignmentWithoutGroundTruth) {
  auto cfg = scenario(3.0, TrajectoryKind::kHover);
  cfg.sim.yaw_amplitude = 0.0;
  auto ds = synthesize(cfg.sim);
  ds.streams.groundtruth.reset();
  const auto out = run_estimator(ds.streams, cfg.estimator);
  // Body z stays aligned with world up at hover.
  const Vec3 up_in_body = out.samples.front().x.q.R() * Vec3::UnitZ();
  EXPECT_GT(up_in_body.z(), std::cos(0.01));
}

TEST(Estimator, RejectsInvalidConfig) {
  auto cfg = scenario(1.0);
  cfg.estimator.window_size = 1;
  EXPECT_THROW(run_estimator(synthesize(cfg.sim).streams, cfg.estimator), ConfigError);
}

TEST(InterpolateGroundTruth, LinearAndOutOfRange) {
  std::vector<GroundTruthSample> gt(2);
  gt[1].t = 1.0;
  gt[1].p = Vec3(2, 0, 0);
  gt[1].q = UnitQuaternion::from_rotation(exp_so3(Vec3(0, 0, 0.4)));
  const auto g = interpolate_groundtruth(gt, 0.25);
  ASSERT_TRUE(g.has_value());
  EXPECT_LE((g->p - Vec3(0.5, 0, 0)).norm(), 1e-12);
  EXPECT_LE((log_so3(g->q.R()) - Vec3(0, 0, 0.1)).norm(), 1e-12);
  EXPECT_FALSE(interpolate_groundtruth(gt, 1.1).has_value());
  EXPECT_FALSE(interpolate_groundtruth(gt, -0.1).has_value());
}
