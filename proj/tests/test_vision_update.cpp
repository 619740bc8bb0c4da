#include <gtest/gtest.h>

#include <algorithm>

#include "forcekf/errors.hpp"
#include "forcekf/vision_update.hpp"
#include "test_helpers.hpp"

using namespace forcekf;
using namespace forcekf::testing;

namespace {

CameraModel body_camera() {
  CameraModel cam;
  cam.fx = cam.fy = 400.0;
  cam.cx = cam.cy = 320.0;
  cam.R_IC = Mat3::Identity();
  cam.p_IC = Vec3::Zero();
  return cam;
}

FeatureTrack observe(std::int64_t id, const Vec3& p_f, const std::vector<PoseClone>& clones, const CameraModel& cam,
                     std::mt19937_64* rng = nullptr, double sigma = 0.0) {
  FeatureTrack t{id, {}};
  std::normal_distribution<double> n(0.0, sigma > 0 ? sigma : 1.0);
  for (const auto& c : clones) {
    auto px = project_pinhole(p_f, c, cam);
    if (!px) continue;
    if (rng != nullptr && sigma > 0) *px += Eigen::Vector2d(n(*rng), n(*rng));
    t.observations.push_back({c.timestamp, px->x(), px->y()});
  }
  return t;
}

// A state with m clones around the origin, all looking at +z of {I}, with
// a small random attitude and position spread.
FilterState clone_state(std::mt19937_64& rng, int m) {
  FilterState s;
  s.imu = random_imu_state(rng);
  for (int i = 0; i < m; ++i) {
    PoseClone c;
    c.q = boxplus(UnitQuaternion::identity(), randn3(rng, 0.1));
    c.p = Vec3(0.3 * i, 0.1 * std::sin(i), 0.0) + randn3(rng, 0.05);
    c.timestamp = 0.1 * i;
    s.clones.push_back(c);
  }
  s.P = random_spd(rng, s.dim(), 0.001, 0.01);
  s.time = 0.1 * (m - 1);
  return s;
}

}  // namespace

TEST(ProjectPinhole, PrincipalPointAndOffset) {
  const auto cam = body_camera();
  PoseClone c;
  EXPECT_LE((*project_pinhole(Vec3(0, 0, 5), c, cam) - Eigen::Vector2d(320, 320)).norm(), 1e-12);
  EXPECT_LE((*project_pinhole(Vec3(0.5, 0, 5), c, cam) - Eigen::Vector2d(360, 320)).norm(), 1e-12);
  EXPECT_FALSE(project_pinhole(Vec3(0, 0, -1), c, cam).has_value());
}

TEST(ProjectPinhole, DefaultCameraLooksDown) {
  CameraModel cam;
  PoseClone c;
  EXPECT_TRUE(project_pinhole(Vec3(0, 0, -3), c, cam).has_value());
  EXPECT_FALSE(project_pinhole(Vec3(0, 0, 3), c, cam).has_value());
}

TEST(Triangulate, TwoViewClosedForm) {
  const auto cam = body_camera();
  std::vector<PoseClone> clones{{UnitQuaternion::identity(), Vec3(0, 0, 0), 0.0},
                                {UnitQuaternion::identity(), Vec3(1, 0, 0), 1.0}};
  const Vec3 truth(0.5, 0, 5);
  const auto res = triangulate(observe(1, truth, clones, cam), clones, cam);
  ASSERT_TRUE(res);
  EXPECT_LE((*res.point - truth).norm(), 1e-9);
}

TEST(Triangulate, ZeroBaselineFails) {
  const auto cam = body_camera();
  std::vector<PoseClone> clones{{UnitQuaternion::identity(), Vec3::Zero(), 0.0},
                                {UnitQuaternion::identity(), Vec3::Zero(), 1.0},
                                {UnitQuaternion::identity(), Vec3::Zero(), 2.0}};
  const auto res = triangulate(observe(1, Vec3(0.2, 0.1, 4), clones, cam), clones, cam);
  EXPECT_FALSE(res);
}

TEST(Triangulate, FailureReasons) {
  const auto cam = body_camera();
  std::vector<PoseClone> clones{{UnitQuaternion::identity(), Vec3(0, 0, 0), 0.0},
                                {UnitQuaternion::identity(), Vec3(1, 0, 0), 1.0}};
  FeatureTrack one{1, {{0.0, 320, 320}}};
  EXPECT_EQ(triangulate(one, clones, cam).failure, TriangulationFailure::kTooFewObservations);
  FeatureTrack orphan{1, {{0.0, 320, 320}, {5.0, 300, 320}}};
  EXPECT_EQ(triangulate(orphan, clones, cam).failure, TriangulationFailure::kMissingClone);
  const auto far = triangulate(observe(1, Vec3(0.5, 0, 100), clones, cam), clones, cam);
  EXPECT_FALSE(far);
}

TEST(Triangulate, NoisyMultiViewAccuracy) {
  // Six clones 0.5 m apart, landmarks 5 m away, 1 px noise.
  const auto cam = body_camera();
  std::mt19937_64 rng(51);
  std::vector<PoseClone> clones;
  for (int i = 0; i < 6; ++i) clones.push_back({UnitQuaternion::identity(), Vec3(0.5 * i, 0, 0), double(i)});
  std::vector<double> errors;
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 truth(1.25 + 0.5 * std::uniform_real_distribution<double>(-1, 1)(rng),
                     0.5 * std::uniform_real_distribution<double>(-1, 1)(rng), 5.0);
    const auto res = triangulate(observe(1, truth, clones, cam, &rng, 1.0), clones, cam);
    errors.push_back(res ? (*res.point - truth).norm() : 1e9);
  }
  std::sort(errors.begin(), errors.end());
  EXPECT_LT(errors[94], 0.2);
}

TEST(Triangulate, DepthErrorReachesCramerRaoBound) {
  // Six clones spanning 0.5 m in total. For lateral motion the depth
  // variance bound is sigma^2 Z^4 / (f^2 sum (x_i - mean x)^2).
  const auto cam = body_camera();
  std::mt19937_64 rng(58);
  std::vector<PoseClone> clones;
  double spread = 0.0;
  for (int i = 0; i < 6; ++i) {
    clones.push_back({UnitQuaternion::identity(), Vec3(0.1 * i, 0, 0), double(i)});
    spread += std::pow(0.1 * i - 0.25, 2);
  }
  const double Z = 5.0;
  const double bound = Z * Z / (cam.fx * std::sqrt(spread));
  double sum = 0.0;
  const int trials = 4000;
  for (int trial = 0; trial < trials; ++trial) {
    const Vec3 truth(0.25 + 0.5 * std::uniform_real_distribution<double>(-1, 1)(rng),
                     0.5 * std::uniform_real_distribution<double>(-1, 1)(rng), Z);
    const auto res = triangulate(observe(1, truth, clones, cam, &rng, 1.0), clones, cam);
    ASSERT_TRUE(res.point.has_value());
    sum += std::pow(res.point->z() - Z, 2);
  }
  const double rms = std::sqrt(sum / trials);
  EXPECT_GT(rms, 0.9 * bound);
  EXPECT_LT(rms, 1.1 * bound);
}

TEST(FeatureLinearize, ZeroResidualAtTruth) {
  std::mt19937_64 rng(52);
  const auto s = clone_state(rng, 5);
  const auto cam = body_camera();
  const Vec3 p_f(0.5, 0.2, 4.0);
  const auto lin = feature_linearize(s, p_f, observe(3, p_f, s.clones, cam), cam);
  EXPECT_EQ(lin.r.size(), 10);
  EXPECT_LE(lin.r.norm(), 1e-9);
}

TEST(FeatureLinearize, JacobiansMatchFiniteDifferences) {
  std::mt19937_64 rng(53);
  const double eps = 1e-6;
  double worst_f = 0.0, worst_x = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    FilterState s = clone_state(rng, 4);
    CameraModel cam = body_camera();
    cam.R_IC = boxplus(UnitQuaternion::identity(), randn3(rng, 0.05)).R();
    cam.p_IC = randn3(rng, 0.05);
    const Vec3 p_f = Vec3(0.5, 0.0, 4.0) + randn3(rng, 0.5);
    const auto track = observe(1, p_f + randn3(rng, 0.01), s.clones, cam);
    const auto lin = feature_linearize(s, p_f, track, cam);
    // H is the Jacobian of the prediction, i.e. of -r.
    for (int k = 0; k < 3; ++k) {
      const Vec3 e = Vec3::Unit(k) * eps;
      const Eigen::VectorXd fd = -(feature_linearize(s, p_f + e, track, cam).r -
                                   feature_linearize(s, p_f - e, track, cam).r) / (2 * eps);
      worst_f = std::max(worst_f, (fd - lin.H_f.col(k)).cwiseAbs().maxCoeff());
    }
    for (std::size_t c = 0; c < s.clones.size(); ++c) {
      for (int k = 0; k < 6; ++k) {
        FilterState sp = s, sm = s;
        Eigen::VectorXd dx = Eigen::VectorXd::Zero(s.dim());
        dx[s.clone_offset(c) + k] = eps;
        apply_correction(sp, dx);
        apply_correction(sm, -dx);
        const Eigen::VectorXd fd =
            -(feature_linearize(sp, p_f, track, cam).r - feature_linearize(sm, p_f, track, cam).r) / (2 * eps);
        worst_x = std::max(worst_x, (fd - lin.H_x.col(s.clone_offset(c) + k)).cwiseAbs().maxCoeff());
      }
    }
    EXPECT_TRUE(lin.H_x.leftCols(18).isZero(0.0));
  }
  EXPECT_LE(worst_f, 1e-4);
  EXPECT_LE(worst_x, 1e-4);
}

TEST(FeatureLinearize, MissingCloneThrows) {
  std::mt19937_64 rng(54);
  const auto s = clone_state(rng, 3);
  FeatureTrack t{1, {{42.0, 320, 240}}};
  EXPECT_THROW(feature_linearize(s, Vec3(0, 0, 4), t, body_camera()), PreconditionError);
}

TEST(NullspaceProject, DimensionsAndAnnihilation) {
  std::mt19937_64 rng(55);
  for (int m : {2, 3, 6, 11}) {
    const Eigen::MatrixXd Hx = Eigen::MatrixXd::Random(2 * m, 30);
    const Eigen::MatrixXd Hf = Eigen::MatrixXd::Random(2 * m, 3);
    const Eigen::VectorXd r = Eigen::VectorXd::Random(2 * m);
    const auto p = nullspace_project(Hx, Hf, r);
    ASSERT_TRUE(p);
    EXPECT_EQ(p->H.rows(), 2 * m - 3);
    EXPECT_EQ(p->r.size(), 2 * m - 3);
    EXPECT_LE(p->r.norm(), r.norm() + 1e-12);
    // The projection equals N^T with N an orthonormal basis of the left
    // nullspace of Hf; recover it from [Hx r] and check N^T Hf = 0.
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(Hf);
    const Eigen::MatrixXd Q = qr.householderQ();
    const Eigen::MatrixXd N = Q.rightCols(2 * m - 3);
    EXPECT_LE((N.transpose() * Hf).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_LE((N.transpose() * Hx - p->H).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(NullspaceProject, RejectsRankDeficientLandmarkJacobian) {
  Eigen::MatrixXd Hf = Eigen::MatrixXd::Random(6, 3);
  Hf.col(2) = Hf.col(0) * 2.0;
  EXPECT_FALSE(nullspace_project(Eigen::MatrixXd::Random(6, 20), Hf, Eigen::VectorXd::Random(6)));
  EXPECT_FALSE(nullspace_project(Eigen::MatrixXd::Random(3, 20), Eigen::MatrixXd::Random(3, 3),
                                 Eigen::VectorXd::Random(3)));
}

TEST(CompressMeasurement, PreservesNormalEquations) {
  const Eigen::MatrixXd H0 = Eigen::MatrixXd::Random(40, 12);
  const Eigen::VectorXd r0 = Eigen::VectorXd::Random(40);
  Eigen::MatrixXd H = H0;
  Eigen::VectorXd r = r0;
  compress_measurement(H, r);
  EXPECT_EQ(H.rows(), 12);
  EXPECT_LE((H.transpose() * H - H0.transpose() * H0).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE((H.transpose() * r - H0.transpose() * r0).cwiseAbs().maxCoeff(), 1e-10);
}

namespace {

struct Scene {
  std::vector<PoseClone> truth;
  std::vector<Vec3> landmarks;
};

Scene make_scene(std::mt19937_64& rng, int frames) {
  Scene sc;
  for (int i = 0; i < frames; ++i) {
    sc.truth.push_back({boxplus(UnitQuaternion::identity(), Vec3(0.02 * i, -0.01 * i, 0.03 * i)),
                        Vec3(0.15 * i, 0.05 * i, 0.0), 0.05 * (i + 1)});
  }
  for (int k = 0; k < 30; ++k) {
    sc.landmarks.push_back(Vec3(std::uniform_real_distribution<double>(-1.5, 2.5)(rng),
                                std::uniform_real_distribution<double>(-1.5, 1.5)(rng),
                                std::uniform_real_distribution<double>(3.0, 6.0)(rng)));
  }
  return sc;
}

CameraFrame frame_at(const Scene& sc, int i, const CameraModel& cam) {
  CameraFrame f{sc.truth[static_cast<std::size_t>(i)].timestamp, {}};
  for (std::size_t k = 0; k < sc.landmarks.size(); ++k) {
    const auto px = project_pinhole(sc.landmarks[k], sc.truth[static_cast<std::size_t>(i)], cam);
    if (px) f.features.push_back({static_cast<std::int64_t>(k), px->x(), px->y()});
  }
  return f;
}

double reprojection_rms(const FilterState& s, const Scene& sc, const CameraModel& cam) {
  double sum = 0.0;
  int n = 0;
  for (const auto& c : s.clones) {
    const auto it = std::find_if(sc.truth.begin(), sc.truth.end(),
                                 [&](const PoseClone& t) { return std::abs(t.timestamp - c.timestamp) < 1e-12; });
    if (it == sc.truth.end()) continue;
    for (const auto& p : sc.landmarks) {
      const auto a = project_pinhole(p, *it, cam);
      const auto b = project_pinhole(p, c, cam);
      if (a && b) {
        sum += (*a - *b).squaredNorm();
        ++n;
      }
    }
  }
  return std::sqrt(sum / n);
}

}  // namespace

TEST(UpdateWithFrame, ColdStartClonesWithoutUpdate) {
  std::mt19937_64 rng(56);
  const auto cam = body_camera();
  const Scene sc = make_scene(rng, 3);
  FilterState s = init_filter(InitialStd{}, sc.truth[0].q, sc.truth[0].p, Vec3::Zero(), sc.truth[0].timestamp);
  VisualUpdater vu(cam, VisionOptions{});
  const auto stats = vu.update_with_frame(s, frame_at(sc, 0, cam));
  EXPECT_FALSE(stats.update_applied);
  EXPECT_EQ(s.clones.size(), 1u);
  EXPECT_EQ(s.dim(), 24);
}

TEST(UpdateWithFrame, NoiselessSequenceReducesReprojectionError) {
  std::mt19937_64 rng(57);
  const auto cam = body_camera();
  const int frames = 8;
  const Scene sc = make_scene(rng, frames);
  FilterState s = init_filter(InitialStd{0.01, 0.02, 0.05, 0.002, 0.01, 1.0}, sc.truth[0].q, sc.truth[0].p,
                              Vec3::Zero(), 0.0);
  VisionOptions opts;
  opts.window_size = 20;
  VisualUpdater vu(cam, opts);
  for (int i = 0; i < frames; ++i) {
    // Fresh, independent pose error before each clone, with a matching
    // prior that is uncorrelated with the earlier clones.
    s.imu.q = boxplus(sc.truth[static_cast<std::size_t>(i)].q, randn3(rng, 0.003));
    s.imu.p = sc.truth[static_cast<std::size_t>(i)].p + randn3(rng, 0.01);
    s.P.topRows(6).setZero();
    s.P.leftCols(6).setZero();
    s.P.diagonal().head<3>().setConstant(0.003 * 0.003);
    s.P.diagonal().segment<3>(3).setConstant(0.01 * 0.01);
    s.time = sc.truth[static_cast<std::size_t>(i)].timestamp;
    vu.update_with_frame(s, frame_at(sc, i, cam));
  }
  const double before = reprojection_rms(s, sc, cam);
  s.time += 0.05;
  const auto st = vu.update_with_frame(s, CameraFrame{s.time, {}});
  EXPECT_TRUE(st.update_applied);
  EXPECT_GT(st.msckf_used, 10);
  const double after = reprojection_rms(s, sc, cam);
  EXPECT_LT(after, before);
  EXPECT_TRUE(vu.tracks().empty());
}

TEST(UpdateWithFrame, FailedTriangulationOnlyAddsClone) {
  const auto cam = body_camera();
  FilterState s = init_filter(InitialStd{}, UnitQuaternion::identity(), Vec3::Zero(), Vec3::Zero(), 0.0);
  VisualUpdater vu(cam, VisionOptions{});
  for (int i = 0; i < 3; ++i) {
    s.time = 0.05 * i;
    vu.update_with_frame(s, CameraFrame{s.time, {{1, 330.0, 300.0}}});
  }
  // Static camera: the track cannot be triangulated when it ends.
  FilterState expected = s;
  s.time = expected.time = 0.15;
  clone_pose(expected, expected.time);
  const auto st = vu.update_with_frame(s, CameraFrame{s.time, {}});
  EXPECT_EQ(st.triangulation_failures, 1);
  EXPECT_FALSE(st.update_applied);
  EXPECT_TRUE(s.P == expected.P);
  EXPECT_TRUE(s.imu.p == expected.imu.p);
  EXPECT_EQ(s.clones.size(), expected.clones.size());
}

TEST(UpdateWithFrame, WindowOverflowMarginalizesOldest) {
  std::mt19937_64 rng(58);
  const auto cam = body_camera();
  const Scene sc = make_scene(rng, 8);
  FilterState s = init_filter(InitialStd{}, sc.truth[0].q, sc.truth[0].p, Vec3::Zero(), 0.0);
  VisionOptions opts;
  opts.window_size = 4;
  VisualUpdater vu(cam, opts);
  for (int i = 0; i < 8; ++i) {
    s.imu.q = sc.truth[static_cast<std::size_t>(i)].q;
    s.imu.p = sc.truth[static_cast<std::size_t>(i)].p;
    s.time = sc.truth[static_cast<std::size_t>(i)].timestamp;
    vu.update_with_frame(s, frame_at(sc, i, cam));
    EXPECT_LE(static_cast<int>(s.clones.size()), opts.window_size);
    for (const auto& [id, t] : vu.tracks()) {
      for (const auto& o : t.observations) EXPECT_TRUE(s.find_clone(o.t).has_value());
    }
  }
  EXPECT_EQ(s.clones.front().timestamp, sc.truth[4].timestamp);
}

TEST(UpdateWithFrame, SlamPromotionKeepsCovarianceValid) {
  std::mt19937_64 rng(59);
  const auto cam = body_camera();
  const Scene sc = make_scene(rng, 10);
  FilterState s = init_filter(InitialStd{}, sc.truth[0].q, sc.truth[0].p, Vec3::Zero(), 0.0);
  VisionOptions opts;
  opts.window_size = 4;
  opts.max_slam_features = 5;
  VisualUpdater vu(cam, opts);
  int promoted = 0;
  for (int i = 0; i < 10; ++i) {
    s.imu.q = sc.truth[static_cast<std::size_t>(i)].q;
    s.imu.p = sc.truth[static_cast<std::size_t>(i)].p;
    s.time = sc.truth[static_cast<std::size_t>(i)].timestamp;
    promoted += vu.update_with_frame(s, frame_at(sc, i, cam)).slam_promoted;
    EXPECT_LE(static_cast<int>(s.landmarks.size()), 5);
    EXPECT_LE((s.P - s.P.transpose()).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_GE(min_eigenvalue(s.P), -1e-9 * s.P.trace());
  }
  EXPECT_GT(promoted, 0);
  for (const auto& lm : s.landmarks) EXPECT_LE((lm.p_f - sc.landmarks[static_cast<std::size_t>(lm.id)]).norm(), 1e-3);
}
