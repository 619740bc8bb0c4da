#include "forcekf/monte_carlo.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "forcekf/dataset_io.hpp"
#include "forcekf/errors.hpp"
#include "forcekf/estimator.hpp"
#include "forcekf/simulator.hpp"

namespace forcekf {

namespace fs = std::filesystem;

namespace {

std::string run_dir_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "run_%03d", i);
  return buf;
}

McRun one_run(const Config& cfg, int i, const McOptions& opts, const std::optional<fs::path>& out_dir) {
  SimConfig sim = cfg.sim;
  sim.seed = cfg.sim.seed + static_cast<std::uint64_t>(i);
  const SimDataset data = synthesize(sim);
  const EstimatorOutput est = run_estimator(data.streams, cfg.estimator);
  McRun run;
  run.index = i;
  run.seed = sim.seed;
  run.metrics = evaluate(est.samples, *data.streams.groundtruth);
  if (opts.write_estimates && out_dir) write_states(*out_dir / run_dir_name(i) / "estimate.csv", est.samples);
  spdlog::info("mc run {} (seed {}): force rmse {:.4f}, ate {:.4f}", i, sim.seed, run.metrics.force_rmse,
               run.metrics.ate);
  return run;
}

}  // namespace

McResult run_monte_carlo(const Config& cfg, const McOptions& opts, const std::optional<fs::path>& out_dir) {
  if (opts.runs < 1) throw ConfigError("cli", "--runs must be at least 1");
  cfg.estimator.validate();
  cfg.sim.validate();

  std::vector<std::optional<McRun>> slots(static_cast<std::size_t>(opts.runs));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  int threads = opts.threads > 0 ? opts.threads : static_cast<int>(std::thread::hardware_concurrency());
  threads = std::clamp(threads, 1, opts.runs);

  auto worker = [&] {
    for (int i = next++; i < opts.runs; i = next++) {
      try {
        slots[static_cast<std::size_t>(i)] = one_run(cfg, i, opts, out_dir);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = opts.runs;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);

  McResult result;
  for (auto& s : slots) result.runs.push_back(std::move(*s));

  const auto n = static_cast<double>(result.runs.size());
  for (const auto& r : result.runs) {
    result.mean_force_rmse += r.metrics.force_rmse / n;
    result.mean_ate += r.metrics.ate / n;
  }
  // Runs share the simulation timeline, so their NEES series align sample by sample.
  const std::size_t blocks = std::size(kAllNeesBlocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    NeesResult avg;
    std::size_t len = result.runs.front().metrics.nees[b].series.size();
    for (const auto& r : result.runs) len = std::min(len, r.metrics.nees[b].series.size());
    avg.t.assign(result.runs.front().metrics.nees[b].t.begin(),
                 result.runs.front().metrics.nees[b].t.begin() + static_cast<std::ptrdiff_t>(len));
    avg.series.assign(len, 0.0);
    for (const auto& r : result.runs) {
      for (std::size_t k = 0; k < len; ++k) avg.series[k] += r.metrics.nees[b].series[k] / n;
    }
    for (double v : avg.series) avg.mean += v / static_cast<double>(len);
    result.mean_nees.push_back(avg.mean);
    result.average_nees.push_back(std::move(avg));
  }
  if (out_dir) write_monte_carlo(*out_dir, result);
  return result;
}

void write_monte_carlo(const fs::path& dir, const McResult& result) {
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "runs.csv", std::ios::binary);
    if (!out) throw DataError("cli", "cannot write " + (dir / "runs.csv").string());
    out << "run,seed,force_rmse,ate";
    for (NeesBlock b : kAllNeesBlocks) out << ",nees_" << block_name(b);
    out << '\n';
    for (const auto& r : result.runs) {
      out << r.index << ',' << r.seed << ',' << format_double(r.metrics.force_rmse) << ','
          << format_double(r.metrics.ate);
      for (double v : r.metrics.nees_mean) out << ',' << format_double(v);
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "summary.csv", std::ios::binary);
    if (!out) throw DataError("cli", "cannot write " + (dir / "summary.csv").string());
    out << "metric,value\n";
    out << "runs," << result.runs.size() << '\n';
    out << "mean_force_rmse," << format_double(result.mean_force_rmse) << '\n';
    out << "mean_ate," << format_double(result.mean_ate) << '\n';
    for (std::size_t b = 0; b < result.mean_nees.size(); ++b) {
      out << "mean_nees_" << block_name(kAllNeesBlocks[b]) << ',' << format_double(result.mean_nees[b]) << '\n';
    }
  }
  write_nees(dir / "nees.csv", result.average_nees);
}

}  // namespace forcekf
