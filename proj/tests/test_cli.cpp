#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <vector>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

Result run_cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(FORCEKF_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.output = ss.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("forcekf_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    std::ofstream(root_ / "short.cfg") << "sim.duration = 4\nsim.seed = 7\n";
  }
  void TearDown() override { fs::remove_all(root_); }

  Result cli(const std::string& args) { return run_cli(args, root_ / "log.txt"); }
  std::string p(const std::string& rel) const { return (root_ / rel).string(); }

  fs::path root_;
};

}  // namespace

TEST_F(Cli, SimRunEvalPipeline) {
  ASSERT_EQ(cli("sim --config " + p("short.cfg") + " --out " + p("ds")).code, 0);
  for (const char* f : {"imu.csv", "thrust.csv", "features.csv", "groundtruth.csv"}) {
    EXPECT_TRUE(fs::exists(root_ / "ds" / f)) << f;
  }
  ASSERT_EQ(cli("run --dataset " + p("ds") + " --config " + p("short.cfg") + " --out " + p("res")).code, 0);
  ASSERT_TRUE(fs::exists(root_ / "res" / "estimate.csv"));
  const auto r = cli("eval --results " + p("res") + " --dataset " + p("ds") + " --out " + p("eval/metrics.csv"));
  ASSERT_EQ(r.code, 0) << r.output;
  const std::string metrics = slurp(root_ / "eval" / "metrics.csv");
  EXPECT_EQ(metrics.rfind("metric,value\nforce_rmse,", 0), 0u) << metrics;
  EXPECT_NE(metrics.find("nees_force_mean,"), std::string::npos);
  EXPECT_EQ(slurp(root_ / "eval" / "nees.csv").rfind("t,attitude,position,velocity,force\n", 0), 0u);
  EXPECT_EQ(cli("eval --results " + p("res") + " --dataset " + p("ds") + " --out " + p("eval/m2.csv") +
                " --align yaw").code,
            0);
}

TEST_F(Cli, RunIsByteIdentical) {
  ASSERT_EQ(cli("sim --config " + p("short.cfg") + " --out " + p("ds")).code, 0);
  ASSERT_EQ(cli("run --dataset " + p("ds") + " --config " + p("short.cfg") + " --out " + p("a")).code, 0);
  ASSERT_EQ(cli("run --dataset " + p("ds") + " --config " + p("short.cfg") + " --out " + p("b")).code, 0);
  EXPECT_EQ(slurp(root_ / "a" / "estimate.csv"), slurp(root_ / "b" / "estimate.csv"));
}

TEST_F(Cli, ShuffledImuIsDataError) {
  ASSERT_EQ(cli("sim --config " + p("short.cfg") + " --out " + p("ds")).code, 0);
  std::vector<std::string> lines;
  {
    std::ifstream in(root_ / "ds" / "imu.csv");
    for (std::string l; std::getline(in, l);) lines.push_back(l);
  }
  std::swap(lines[20], lines[21]);
  {
    std::ofstream out(root_ / "ds" / "imu.csv");
    for (const auto& l : lines) out << l << "\n";
  }
  const auto r = cli("run --dataset " + p("ds") + " --out " + p("res"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("imu.csv:22"), std::string::npos) << r.output;
  EXPECT_FALSE(fs::exists(root_ / "res" / "estimate.csv"));
}

TEST_F(Cli, ConfigErrorExitCode) {
  std::ofstream(root_ / "bad.cfg") << "filter.window_size = 2\n";
  const auto r = cli("sim --config " + p("bad.cfg") + " --out " + p("ds"));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.output.find("filter.window_size"), std::string::npos) << r.output;
}

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(cli("").code, 1);
  EXPECT_EQ(cli("frobnicate").code, 1);
  EXPECT_EQ(cli("run --dataset " + p("missing")).code, 1);
  EXPECT_EQ(cli("eval --results " + p("") + " --dataset " + p("") + " --out x --align sideways").code, 1);
}

TEST_F(Cli, MonteCarloOutputs) {
  std::ofstream(root_ / "mc.cfg") << "sim.duration = 3\n";
  const auto r = cli("mc --config " + p("mc.cfg") + " --runs 2 --threads 2 --write-estimates --out " + p("mc"));
  ASSERT_EQ(r.code, 0) << r.output;
  for (const char* f : {"runs.csv", "summary.csv", "nees.csv", "run_000/estimate.csv", "run_001/estimate.csv"}) {
    EXPECT_TRUE(fs::exists(root_ / "mc" / f)) << f;
  }
}

namespace {

// Generic by-name CSV reader, as an external report script would use.
std::map<std::string, std::vector<double>> read_columns(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  std::vector<std::string> names;
  std::stringstream hs(line);
  for (std::string c; std::getline(hs, c, ',');) names.push_back(c);
  std::map<std::string, std::vector<double>> cols;
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::size_t i = 0;
    for (std::string c; std::getline(ls, c, ','); ++i) cols[names.at(i)].push_back(std::stod(c));
    EXPECT_EQ(i, names.size()) << path;
  }
  return cols;
}

}  // namespace

TEST_F(Cli, OutputsFollowReportSchemas) {
  ASSERT_EQ(cli("sim --config " + p("short.cfg") + " --out " + p("ds")).code, 0);
  ASSERT_EQ(cli("run --dataset " + p("ds") + " --config " + p("short.cfg") + " --out " + p("res")).code, 0);
  ASSERT_EQ(cli("eval --results " + p("res") + " --dataset " + p("ds") + " --out " + p("res/metrics.csv")).code, 0);

  const auto est = read_columns(root_ / "res" / "estimate.csv");
  const auto gt = read_columns(root_ / "ds" / "groundtruth.csv");
  const auto nees = read_columns(root_ / "res" / "nees.csv");
  for (const char* c : {"t", "px", "py", "Fx", "Fy", "Fz", "var_Fx", "var_Fy", "var_Fz"}) {
    ASSERT_TRUE(est.count(c)) << c;
  }
  for (const char* c : {"t", "px", "py", "Fx", "Fy", "Fz"}) ASSERT_TRUE(gt.count(c)) << c;
  for (const char* c : {"t", "attitude", "position", "velocity", "force"}) ASSERT_TRUE(nees.count(c)) << c;

  const auto& t = est.at("t");
  ASSERT_GT(t.size(), 100u);
  for (std::size_t i = 1; i < t.size(); ++i) ASSERT_GT(t[i], t[i - 1]);
  for (const char* c : {"var_Fx", "var_Fy", "var_Fz"}) {
    for (double v : est.at(c)) ASSERT_GE(v, 0.0);
  }
  EXPECT_EQ(nees.at("t"), t);
  EXPECT_LE(std::abs(gt.at("t").front() - t.front()), 1e-9);
}
