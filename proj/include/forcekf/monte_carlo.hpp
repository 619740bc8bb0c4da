#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "forcekf/config.hpp"
#include "forcekf/evaluation.hpp"

namespace forcekf {

struct McOptions {
  int runs = 25;
  int threads = 0;  // 0 picks the hardware concurrency
  bool write_estimates = false;  // estimate.csv per run under run_NNN/
};

struct McRun {
  int index = 0;
  std::uint64_t seed = 0;
  MetricsReport metrics;
};

struct McResult {
  std::vector<McRun> runs;
  /// Per-timestep NEES averaged over runs, one series per block.
  std::vector<NeesResult> average_nees;
  double mean_force_rmse = 0.0;
  double mean_ate = 0.0;
  /// Time average of average_nees, per block.
  std::vector<double> mean_nees;
};

/// Run i simulates with seed cfg.sim.seed + i, estimates with the full
/// covariance and evaluates against ground truth. Results are assembled in
/// run order, independent of the thread count.
McResult run_monte_carlo(const Config& cfg, const McOptions& opts,
                         const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// runs.csv, summary.csv and nees.csv under `dir`.
void write_monte_carlo(const std::filesystem::path& dir, const McResult& result);

}  // namespace forcekf
