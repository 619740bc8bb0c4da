#include "forcekf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Cholesky>
#include <Eigen/Geometry>

#include "forcekf/dataset_io.hpp"
#include "forcekf/errors.hpp"
#include "forcekf/estimator.hpp"

namespace forcekf {

namespace {

void check_series(const TimeSeries3& s, const char* name) {
  if (s.t.size() != s.value.size()) throw PreconditionError("evaluation", std::string(name) + ": size mismatch");
  if (s.t.empty()) throw EvaluationError("evaluation", std::string(name) + ": empty series");
}

Vec3 interpolate(const TimeSeries3& s, double t) {
  const auto it = std::lower_bound(s.t.begin(), s.t.end(), t);
  const auto i = static_cast<std::size_t>(it - s.t.begin());
  if (i == s.t.size()) return s.value.back();
  if (i == 0 || s.t[i] == t) return s.value[i];
  const double w = (t - s.t[i - 1]) / (s.t[i] - s.t[i - 1]);
  return (1.0 - w) * s.value[i - 1] + w * s.value[i];
}

}  // namespace

RmseResult force_rmse(const TimeSeries3& est, const TimeSeries3& gt) {
  check_series(est, "estimate");
  check_series(gt, "ground truth");
  const double span = est.t.back() - est.t.front();
  const double overlap = std::min(est.t.back(), gt.t.back()) - std::max(est.t.front(), gt.t.front());
  if (overlap < 0.0 || overlap < 0.5 * span) {
    throw EvaluationError("evaluation", "ground truth covers less than half of the estimate span");
  }
  RmseResult out;
  double sum = 0.0;
  for (std::size_t i = 0; i < est.t.size(); ++i) {
    if (est.t[i] < gt.t.front() || est.t[i] > gt.t.back()) continue;
    sum += (est.value[i] - interpolate(gt, est.t[i])).squaredNorm();
    ++out.samples;
  }
  if (out.samples == 0) throw EvaluationError("evaluation", "no estimate sample inside the ground-truth span");
  out.rmse = std::sqrt(sum / out.samples);
  return out;
}

AteResult ate(const TimeSeries3& est, const TimeSeries3& gt, AlignMode mode, double max_dt) {
  check_series(est, "estimate");
  check_series(gt, "ground truth");
  std::vector<Vec3> src, dst;
  for (std::size_t i = 0; i < est.t.size(); ++i) {
    const auto it = std::lower_bound(gt.t.begin(), gt.t.end(), est.t[i]);
    std::size_t j = static_cast<std::size_t>(it - gt.t.begin());
    if (j == gt.t.size() || (j > 0 && est.t[i] - gt.t[j - 1] < gt.t[j] - est.t[i])) --j;
    if (std::abs(gt.t[j] - est.t[i]) > max_dt) continue;
    src.push_back(est.value[i]);
    dst.push_back(gt.value[j]);
  }
  const int n = static_cast<int>(src.size());
  if (n < 10) throw EvaluationError("evaluation", "ate needs at least 10 matched poses, got " + std::to_string(n));

  Eigen::Matrix3Xd S(3, n), D(3, n);
  for (int i = 0; i < n; ++i) {
    S.col(i) = src[static_cast<std::size_t>(i)];
    D.col(i) = dst[static_cast<std::size_t>(i)];
  }
  AteResult out;
  out.pairs = n;
  if (mode == AlignMode::kRigid) {
    const Eigen::Matrix4d T = Eigen::umeyama(S, D, false);
    out.R = T.topLeftCorner<3, 3>();
    out.t = T.topRightCorner<3, 1>();
  } else {
    const Vec3 ms = S.rowwise().mean();
    const Vec3 md = D.rowwise().mean();
    double sin_sum = 0.0, cos_sum = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vec3 a = S.col(i) - ms;
      const Vec3 b = D.col(i) - md;
      sin_sum += a.x() * b.y() - a.y() * b.x();
      cos_sum += a.x() * b.x() + a.y() * b.y();
    }
    out.R = Eigen::AngleAxisd(std::atan2(sin_sum, cos_sum), Vec3::UnitZ()).toRotationMatrix();
    out.t = md - out.R * ms;
  }
  const Eigen::Matrix3Xd E = (out.R * S).colwise() + out.t - D;
  out.ate = std::sqrt(E.colwise().squaredNorm().mean());
  return out;
}

const char* block_name(NeesBlock b) {
  switch (b) {
    case NeesBlock::kAttitude: return "attitude";
    case NeesBlock::kPosition: return "position";
    case NeesBlock::kVelocity: return "velocity";
    case NeesBlock::kForce: return "force";
  }
  return "?";
}

double nees_value(const Eigen::VectorXd& e, const Eigen::MatrixXd& P) {
  const Eigen::LLT<Eigen::MatrixXd> llt(P);
  if (llt.info() != Eigen::Success) throw NumericalError("evaluation", "block covariance is not positive definite");
  return e.dot(llt.solve(e));
}

NeesResult nees(std::span<const EstimateSample> est, const std::vector<GroundTruthSample>& gt, NeesBlock block) {
  NeesResult out;
  int offset = idx::kTheta;
  switch (block) {
    case NeesBlock::kAttitude: offset = idx::kTheta; break;
    case NeesBlock::kPosition: offset = idx::kPos; break;
    case NeesBlock::kVelocity: offset = idx::kVel; break;
    case NeesBlock::kForce: offset = idx::kForce; break;
  }
  double sum = 0.0;
  for (const auto& s : est) {
    const auto g = interpolate_groundtruth(gt, s.t);
    if (!g) throw EvaluationError("evaluation", "no ground truth at t=" + format_double(s.t));
    Vec3 e;
    switch (block) {
      case NeesBlock::kAttitude: e = boxminus(g->q, s.x.q); break;
      case NeesBlock::kPosition: e = g->p - s.x.p; break;
      case NeesBlock::kVelocity: e = g->v - s.x.v; break;
      case NeesBlock::kForce: e = g->force - s.x.force; break;
    }
    const double v = nees_value(e, s.P.block<3, 3>(offset, offset));
    out.t.push_back(s.t);
    out.series.push_back(v);
    sum += v;
  }
  if (out.series.empty()) throw EvaluationError("evaluation", "no estimate samples");
  out.mean = sum / static_cast<double>(out.series.size());
  return out;
}

MetricsReport evaluate(std::span<const EstimateSample> est, const std::vector<GroundTruthSample>& gt,
                       const EvaluationOptions& opts) {
  TimeSeries3 f_est, f_gt, p_est, p_gt;
  for (const auto& s : est) {
    f_est.t.push_back(s.t);
    f_est.value.push_back(s.x.force);
    p_est.t.push_back(s.t);
    p_est.value.push_back(s.x.p);
  }
  for (const auto& g : gt) {
    f_gt.t.push_back(g.t);
    f_gt.value.push_back(g.force);
    p_gt.t.push_back(g.t);
    p_gt.value.push_back(g.p);
  }
  MetricsReport r;
  const auto rmse = force_rmse(f_est, f_gt);
  r.force_rmse = rmse.rmse;
  r.force_samples = rmse.samples;
  const auto a = ate(p_est, p_gt, opts.align);
  r.ate = a.ate;
  r.ate_pairs = a.pairs;
  if (opts.with_nees) {
    for (NeesBlock b : kAllNeesBlocks) {
      r.nees.push_back(nees(est, gt, b));
      r.nees_mean.push_back(r.nees.back().mean);
    }
  }
  return r;
}

void write_metrics(const std::filesystem::path& path, const MetricsReport& report) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("evaluation", "cannot write " + path.string());
  out << "metric,value\n";
  out << "force_rmse," << format_double(report.force_rmse) << '\n';
  out << "force_samples," << report.force_samples << '\n';
  out << "ate," << format_double(report.ate) << '\n';
  out << "ate_pairs," << report.ate_pairs << '\n';
  for (std::size_t i = 0; i < report.nees_mean.size(); ++i) {
    out << "nees_" << block_name(kAllNeesBlocks[i]) << "_mean," << format_double(report.nees_mean[i]) << '\n';
  }
  if (!out) throw DataError("evaluation", "I/O failure writing " + path.string());
}

void write_nees(const std::filesystem::path& path, const std::vector<NeesResult>& blocks) {
  if (blocks.size() != std::size(kAllNeesBlocks)) throw PreconditionError("evaluation", "expected one series per block");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("evaluation", "cannot write " + path.string());
  out << "t";
  for (NeesBlock b : kAllNeesBlocks) out << ',' << block_name(b);
  out << '\n';
  const std::size_t n = blocks.front().series.size();
  for (std::size_t k = 0; k < n; ++k) {
    out << format_double(blocks.front().t[k]);
    for (const auto& b : blocks) out << ',' << format_double(b.series.at(k));
    out << '\n';
  }
  if (!out) throw DataError("evaluation", "I/O failure writing " + path.string());
}

}  // namespace forcekf
