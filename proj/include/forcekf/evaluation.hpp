#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "forcekf/dataset.hpp"

namespace forcekf {

struct TimeSeries3 {
  std::vector<double> t;
  std::vector<Vec3> value;
};

/// sqrt(mean ||F_est - F_gt||^2) with ground truth linearly interpolated to
/// the estimate timestamps. Throws EvaluationError when the two series
/// overlap over less than half of the estimate span.
struct RmseResult {
  double rmse = 0.0;
  int samples = 0;
};
RmseResult force_rmse(const TimeSeries3& est, const TimeSeries3& gt);

enum class AlignMode { kRigid, kYaw };

struct AteResult {
  double ate = 0.0;
  int pairs = 0;
  Mat3 R = Mat3::Identity();  // maps estimate positions onto ground truth
  Vec3 t = Vec3::Zero();
};

/// RMSE of position errors after aligning the estimate to ground truth
/// (rotation + translation, no scale). Poses are matched by nearest
/// timestamp within `max_dt`; at least 10 pairs are required.
AteResult ate(const TimeSeries3& est, const TimeSeries3& gt, AlignMode mode = AlignMode::kRigid,
              double max_dt = 0.01);

enum class NeesBlock { kAttitude, kPosition, kVelocity, kForce };
inline constexpr NeesBlock kAllNeesBlocks[] = {NeesBlock::kAttitude, NeesBlock::kPosition, NeesBlock::kVelocity,
                                               NeesBlock::kForce};
const char* block_name(NeesBlock b);

/// e^T P^-1 e; throws NumericalError when P is not positive definite.
double nees_value(const Eigen::VectorXd& e, const Eigen::MatrixXd& P);

struct NeesResult {
  std::vector<double> t;
  std::vector<double> series;
  double mean = 0.0;
};

/// NEES of one ImuState block at every estimate sample. Attitude errors use
/// the boxminus of the ground truth against the estimate.
NeesResult nees(std::span<const EstimateSample> est, const std::vector<GroundTruthSample>& gt, NeesBlock block);

struct MetricsReport {
  double force_rmse = 0.0;
  int force_samples = 0;
  double ate = 0.0;
  int ate_pairs = 0;
  /// Per block mean NEES, in kAllNeesBlocks order.
  std::vector<double> nees_mean;
  std::vector<NeesResult> nees;
};

struct EvaluationOptions {
  AlignMode align = AlignMode::kRigid;
  bool with_nees = true;
};

MetricsReport evaluate(std::span<const EstimateSample> est, const std::vector<GroundTruthSample>& gt,
                       const EvaluationOptions& opts = {});

/// `metric,value` rows.
void write_metrics(const std::filesystem::path& path, const MetricsReport& report);
/// `t,attitude,position,velocity,force` rows; all series share timestamps.
void write_nees(const std::filesystem::path& path, const std::vector<NeesResult>& blocks);

}  // namespace forcekf
