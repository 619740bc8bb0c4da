#include "forcekf/simulator.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "forcekf/errors.hpp"

namespace forcekf {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Kinematics {
  Vec3 p, v, a;
};

Kinematics position_profile(const SimConfig& cfg, double t) {
  const double w = kTwoPi / cfg.period;
  const double A = cfg.amplitude;
  const double Az = cfg.vertical_amplitude;
  Kinematics k{cfg.center, Vec3::Zero(), Vec3::Zero()};
  // Vertical oscillation at twice the base frequency, shared by all shapes.
  const double s2 = std::sin(2.0 * w * t), c2 = std::cos(2.0 * w * t);
  k.p.z() += Az * s2;
  k.v.z() += 2.0 * Az * w * c2;
  k.a.z() += -4.0 * Az * w * w * s2;
  switch (cfg.trajectory) {
    case TrajectoryKind::kHover:
      break;
    case TrajectoryKind::kCircle: {
      const double c = std::cos(w * t), s = std::sin(w * t);
      k.p += Vec3(A * c, A * s, 0.0);
      k.v += Vec3(-A * w * s, A * w * c, 0.0);
      k.a += Vec3(-A * w * w * c, -A * w * w * s, 0.0);
      break;
    }
    case TrajectoryKind::kLemniscate: {
      // Lemniscate of Gerono: x = A sin(wt), y = A/2 sin(2wt).
      const double c = std::cos(w * t), s = std::sin(w * t);
      k.p += Vec3(A * s, 0.5 * A * s2, 0.0);
      k.v += Vec3(A * w * c, A * w * c2, 0.0);
      k.a += Vec3(-A * w * w * s, -2.0 * A * w * w * s2, 0.0);
      break;
    }
  }
  return k;
}

double yaw_angle(const SimConfig& cfg, double t) {
  return cfg.yaw_amplitude * std::sin(kTwoPi * t / cfg.yaw_period);
}

double yaw_rate(const SimConfig& cfg, double t) {
  return cfg.yaw_amplitude * (kTwoPi / cfg.yaw_period) * std::cos(kTwoPi * t / cfg.yaw_period);
}

Vec3 world_rope_force(const SimConfig& cfg, const Vec3& p) {
  return rope_force(p, cfg.rope.anchor, cfg.rope.rest_length, cfg.rope.stiffness);
}

// Body-to-world rotation at time t.
Mat3 body_to_world(const SimConfig& cfg, double t) {
  const double psi = yaw_angle(cfg, t);
  if (cfg.attitude_mode == AttitudeMode::kLevel) {
    return Eigen::AngleAxisd(psi, Vec3::UnitZ()).toRotationMatrix();
  }
  const Kinematics k = position_profile(cfg, t);
  const Vec3 thrust_w = k.a - cfg.gravity - world_rope_force(cfg, k.p);
  const Vec3 zb = thrust_w.normalized();
  const Vec3 xc(std::cos(psi), std::sin(psi), 0.0);
  const Vec3 yb = zb.cross(xc).normalized();
  const Vec3 xb = yb.cross(zb);
  Mat3 R;
  R.col(0) = xb;
  R.col(1) = yb;
  R.col(2) = zb;
  return R;
}

}  // namespace

void SimConfig::validate() const {
  const auto require = [](bool ok, const char* key, const char* what) {
    if (!ok) throw ConfigError("simulator", std::string(key) + " " + what);
  };
  require(duration > 0.0, "sim.duration", "must be positive");
  require(imu_rate > 0.0, "sim.imu_rate", "must be positive");
  require(camera_rate > 0.0, "sim.camera_rate", "must be positive");
  require(period > 0.0, "sim.period", "must be positive");
  require(yaw_period > 0.0, "sim.yaw_period", "must be positive");
  require(amplitude >= 0.0, "sim.amplitude", "must be non-negative");
  require(rope.stiffness >= 0.0, "rope.stiffness", "must be non-negative");
  require(rope.rest_length >= 0.0, "rope.rest_length", "must be non-negative");
  require(landmarks.count >= 0, "landmarks.count", "must be non-negative");
  require((landmarks.box_max - landmarks.box_min).minCoeff() >= 0.0, "landmarks.box_max",
          "must not be below landmarks.box_min");
  require(min_depth > 0.0 && max_depth > min_depth, "sim.max_depth", "must exceed sim.min_depth > 0");
  const double noises[] = {noise.sigma_w, noise.sigma_bw, noise.sigma_ba, noise.sigma_t,
                           noise.sigma_a, noise.sigma_px, noise.init_bw,  noise.init_ba};
  for (double n : noises) require(n >= 0.0, "simnoise", "standard deviations must be non-negative");
}

Vec3 rope_force(const Vec3& p, const Vec3& anchor, double rest_length, double stiffness) {
  if (stiffness < 0.0) throw PreconditionError("simulator", "rope stiffness must be non-negative");
  const Vec3 d = p - anchor;
  const double dist = d.norm();
  if (stiffness == 0.0) return Vec3::Zero();
  if (dist < 1e-9) {
    if (rest_length < 1e-9) {
      throw NumericalError("simulator", "rope force direction undefined at the anchor");
    }
    return Vec3::Zero();
  }
  const double stretch = std::max(0.0, dist - rest_length);
  return -stiffness * stretch * d / dist;
}

SimRecord sample_trajectory(const SimConfig& cfg, double t) {
  const Kinematics k = position_profile(cfg, t);
  const Mat3 R_WI = body_to_world(cfg, t);
  SimRecord rec;
  rec.t = t;
  rec.p = k.p;
  rec.v = k.v;
  rec.a_w = k.a;
  rec.q = UnitQuaternion::from_rotation(R_WI.transpose());
  if (cfg.attitude_mode == AttitudeMode::kLevel) {
    rec.omega = Vec3(0.0, 0.0, yaw_rate(cfg, t));
  } else {
    constexpr double h = 1e-5;
    const Mat3 Rm = body_to_world(cfg, t - h);
    const Mat3 Rp = body_to_world(cfg, t + h);
    rec.omega = log_so3(Rm.transpose() * Rp) / (2.0 * h);
  }
  const Mat3 R_IW = R_WI.transpose();
  rec.force_body = R_IW * world_rope_force(cfg, k.p);
  if (t >= cfg.step.start_time) rec.force_body += cfg.step.body;
  rec.thrust_true = R_IW * (k.a - cfg.gravity) - rec.force_body;
  return rec;
}

namespace {
std::size_t imu_sample_count(const SimConfig& cfg) {
  return static_cast<std::size_t>(std::floor(cfg.duration * cfg.imu_rate + 1e-9)) + 1;
}
}  // namespace

namespace {

// Independent stream per purpose; seed_seq consumes 32-bit words, so the
// 64-bit seed is split.
std::mt19937_64 seeded_rng(std::uint64_t seed, std::uint32_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), tag};
  return std::mt19937_64(seq);
}

}  // namespace

std::vector<SimRecord> gen_trajectory(const SimConfig& cfg) {
  cfg.validate();
  const std::size_t n = imu_sample_count(cfg);
  std::vector<SimRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(sample_trajectory(cfg, static_cast<double>(i) / cfg.imu_rate));
  }
  return out;
}

std::vector<Landmark> gen_landmarks(const SimConfig& cfg) {
  std::mt19937_64 rng = seeded_rng(cfg.seed, 0x6c616e64);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Landmark> out;
  out.reserve(static_cast<std::size_t>(cfg.landmarks.count));
  const Vec3 span = cfg.landmarks.box_max - cfg.landmarks.box_min;
  for (int i = 0; i < cfg.landmarks.count; ++i) {
    const double ux = unit(rng);
    const double uy = unit(rng);
    const double uz = unit(rng);
    const Vec3 p = cfg.landmarks.box_min + Vec3(ux * span.x(), uy * span.y(), uz * span.z());
    out.push_back(Landmark{i, p});
  }
  return out;
}

SimDataset synthesize(const SimConfig& cfg) {
  cfg.validate();
  SimDataset ds;
  ds.truth = gen_trajectory(cfg);
  ds.landmarks = gen_landmarks(cfg);

  std::mt19937_64 imu_rng = seeded_rng(cfg.seed, 0x696d75);
  std::mt19937_64 cam_rng = seeded_rng(cfg.seed, 0x63616d);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::normal_distribution<double> pixel_normal(0.0, 1.0);
  const auto randn3 = [&normal](std::mt19937_64& rng) {
    const double x = normal(rng);
    const double y = normal(rng);
    const double z = normal(rng);
    return Vec3(x, y, z);
  };

  const double dt = 1.0 / cfg.imu_rate;
  const double sqrt_dt = std::sqrt(dt);
  const SimNoise& n = cfg.noise;
  Vec3 bg = n.init_bw * randn3(imu_rng);
  Vec3 ba = n.init_ba * randn3(imu_rng);

  auto& s = ds.streams;
  s.imu.reserve(ds.truth.size());
  s.thrust.reserve(ds.truth.size());
  std::vector<GroundTruthSample> gt;
  gt.reserve(ds.truth.size());
  for (const SimRecord& rec : ds.truth) {
    ImuSample imu;
    imu.t = rec.t;
    imu.omega = rec.omega + bg + (n.sigma_w / sqrt_dt) * randn3(imu_rng);
    imu.accel = rec.thrust_true + rec.force_body + ba + n.sigma_a * randn3(imu_rng);
    ThrustSample thrust;
    thrust.t = rec.t;
    thrust.thrust = rec.thrust_true + (n.sigma_t / sqrt_dt) * randn3(imu_rng);
    s.imu.push_back(imu);
    s.thrust.push_back(thrust);
    gt.push_back(GroundTruthSample{rec.t, rec.q, rec.p, rec.v, rec.force_body});

    bg += n.sigma_bw * sqrt_dt * randn3(imu_rng);
    ba += n.sigma_ba * sqrt_dt * randn3(imu_rng);
  }
  s.groundtruth = std::move(gt);

  // Camera times sit on the IMU grid whenever the rates divide evenly.
  std::vector<double> cam_times;
  const double ratio = cfg.imu_rate / cfg.camera_rate;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) < 1e-9 && rounded >= 1.0) {
    const auto step = static_cast<std::size_t>(rounded);
    for (std::size_t i = 0; i < ds.truth.size(); i += step) cam_times.push_back(ds.truth[i].t);
  } else {
    for (std::size_t k = 0;; ++k) {
      const double t = static_cast<double>(k) / cfg.camera_rate;
      if (t > cfg.duration + 1e-12) break;
      cam_times.push_back(t);
    }
  }

  const CameraModel& cam = cfg.camera;
  for (const double t : cam_times) {
    const SimRecord rec = sample_trajectory(cfg, t);
    const PoseClone pose{rec.q, rec.p, t};
    CameraFrame frame;
    frame.t = t;
    for (const Landmark& lm : ds.landmarks) {
      const Vec3 p_c = to_camera(lm.p_f, pose, cam);
      if (p_c.z() < cfg.min_depth || p_c.z() > cfg.max_depth) continue;
      const double u = cam.fx * p_c.x() / p_c.z() + cam.cx;
      const double v = cam.fy * p_c.y() / p_c.z() + cam.cy;
      if (u < 0.0 || v < 0.0 || u >= cam.width || v >= cam.height) continue;
      const double nu = pixel_normal(cam_rng);
      const double nv = pixel_normal(cam_rng);
      frame.features.push_back({lm.id, u + n.sigma_px * nu, v + n.sigma_px * nv});
    }
    s.frames.push_back(std::move(frame));
  }
  return ds;
}

}  // namespace forcekf
