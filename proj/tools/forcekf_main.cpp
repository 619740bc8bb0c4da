// forcekf: simulate, estimate, evaluate and batch-evaluate force-aware VIO.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/cfg/helpers.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "forcekf/config.hpp"
#include "forcekf/dataset_io.hpp"
#include "forcekf/errors.hpp"
#include "forcekf/estimator.hpp"
#include "forcekf/evaluation.hpp"
#include "forcekf/monte_carlo.hpp"
#include "forcekf/simulator.hpp"

namespace fs = std::filesystem;
using namespace forcekf;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

Config load_config(const std::optional<std::string>& path) {
  return path ? parse_config(*path) : Config{};
}

int cmd_sim(const std::optional<std::string>& config, const std::string& out) {
  const Config cfg = load_config(config);
  const SimDataset data = synthesize(cfg.sim);
  write_dataset(out, data.streams);
  spdlog::info("wrote {} imu samples and {} frames to {}", data.streams.imu.size(), data.streams.frames.size(), out);
  return 0;
}

int cmd_run(const std::string& dataset, const std::optional<std::string>& config, const std::string& out) {
  const Config cfg = load_config(config);
  const DatasetStreams streams = load_dataset(dataset);
  EstimatorOptions opts;
  opts.audit = spdlog::get_level() <= spdlog::level::debug;
  const EstimatorOutput est = run_estimator(streams, cfg.estimator, opts);
  if (est.stats.ordering_violations > 0) {
    throw NumericalError("cli", std::to_string(est.stats.ordering_violations) + " measurements applied out of order");
  }
  for (const auto& a : est.audit) {
    spdlog::trace("audit {} t={:.9f} filter={:.9f}", a.kind == EventKind::kImu ? "imu" : "camera",
                  a.measurement_time, a.filter_time);
  }
  write_states(fs::path(out) / "estimate.csv", est.samples);
  spdlog::info("{} states, {} vision updates, {} msckf features", est.samples.size(), est.stats.vision_updates,
               est.stats.msckf_features);
  return 0;
}

int cmd_eval(const std::string& results, const std::string& dataset, const std::string& out, const std::string& align) {
  const auto est = read_states(fs::path(results) / "estimate.csv");
  const DatasetStreams streams = load_dataset(dataset);
  if (!streams.groundtruth) throw DataError("dataset_io", "groundtruth.csv is required for evaluation");
  EvaluationOptions opts;
  opts.align = align == "yaw" ? AlignMode::kYaw : AlignMode::kRigid;
  // estimate.csv keeps only the covariance diagonal, so block NEES here
  // ignores intra-block correlations.
  const MetricsReport report = evaluate(est, *streams.groundtruth, opts);
  const fs::path out_path(out);
  write_metrics(out_path, report);
  write_nees(out_path.parent_path() / "nees.csv", report.nees);
  std::cout << "force_rmse " << format_double(report.force_rmse) << "\nate " << format_double(report.ate) << '\n';
  return 0;
}

int cmd_mc(const std::optional<std::string>& config, int runs, const std::string& out, int threads,
           bool write_estimates) {
  const Config cfg = load_config(config);
  McOptions opts;
  opts.runs = runs;
  opts.threads = threads;
  opts.write_estimates = write_estimates;
  const McResult r = run_monte_carlo(cfg, opts, fs::path(out));
  std::cout << "mean_force_rmse " << format_double(r.mean_force_rmse) << "\nmean_ate " << format_double(r.mean_ate)
            << "\nmean_nees_force " << format_double(r.mean_nees.back()) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_logger_mt("forcekf"));
  spdlog::set_level(spdlog::level::warn);
  if (const char* env = std::getenv("FORCEKF_LOG")) spdlog::cfg::helpers::load_levels(env);

  CLI::App app{"Force-aware visual-inertial estimator"};
  app.require_subcommand(1);

  std::optional<std::string> config;
  std::string out, dataset, results, align = "rigid";
  int runs = 25, threads = 0;
  bool write_estimates = false;

  auto* sim = app.add_subcommand("sim", "Synthesize a dataset");
  sim->add_option("--config", config, "Config file");
  sim->add_option("--out", out, "Output dataset directory")->required();

  auto* run = app.add_subcommand("run", "Run the estimator over a dataset");
  run->add_option("--dataset", dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  run->add_option("--config", config, "Config file");
  run->add_option("--out", out, "Output directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate estimates against ground truth");
  eval->add_option("--results", results, "Directory holding estimate.csv")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--dataset", dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", out, "metrics.csv path")->required();
  eval->add_option("--align", align, "ATE alignment")->check(CLI::IsMember({"rigid", "yaw"}));

  auto* mc = app.add_subcommand("mc", "Monte Carlo batch of sim + run + eval");
  mc->add_option("--config", config, "Config file");
  mc->add_option("--runs", runs, "Number of runs")->check(CLI::PositiveNumber);
  mc->add_option("--out", out, "Output directory")->required();
  mc->add_option("--threads", threads, "Worker threads (0: hardware)")->check(CLI::NonNegativeNumber);
  mc->add_flag("--write-estimates", write_estimates, "Keep estimate.csv of every run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*sim) return cmd_sim(config, out);
    if (*run) return cmd_run(dataset, config, out);
    if (*eval) return cmd_eval(results, dataset, out, align);
    if (*mc) return cmd_mc(config, runs, out, threads, write_estimates);
  } catch (const NumericalError& e) {
    std::cerr << "[" << e.module() << "] " << e.what() << '\n';
    return kExitNumerical;
  } catch (const PreconditionError& e) {
    std::cerr << "[" << e.module() << "] " << e.what() << '\n';
    return kExitNumerical;
  } catch (const Error& e) {
    std::cerr << "[" << e.module() << "] " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "[cli] " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
