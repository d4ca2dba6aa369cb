#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args, const std::string& env = "") {
  const fs::path log = fs::temp_directory_path() / ("gldiff_cli_" + std::to_string(::getpid()) + ".log");
  const std::string cmd = env + " " + GLDIFF_CLI_PATH + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream is(log);
  std::stringstream ss;
  ss << is.rdbuf();
  r.out = ss.str();
  fs::remove(log);
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

class Workdir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gldiff_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()) + "_" +
            std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write_config(const std::string& name, const std::string& body) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << body;
    return p;
  }

  fs::path dir_;
};

}  // namespace

TEST(Cli, ListSuites) {
  const Result r = run("list-suites");
  EXPECT_EQ(r.code, 0);
  int lines = 0;
  std::istringstream is(r.out);
  for (std::string line; std::getline(is, line);) ++lines;
  EXPECT_EQ(lines, 13);
  for (const char* s : {"dufresne", "process-dufresne", "bessel-pde", "mellin", "z-flip", "gig-diagnostic",
                        "burke-oioo", "burke-tito", "lyapunov", "scaling-x", "scaling-z", "eig-consistency",
                        "stationarity-q"})
    EXPECT_NE(r.out.find(s), std::string::npos) << s;
}

TEST(Cli, UsageErrorsAreConfigErrors) {
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("run").code, 2);
  EXPECT_EQ(run("--threads 0 list-suites").code, 2);
}

TEST_F(Workdir, BadConfigWritesNothing) {
  const fs::path out = dir_ / "out";
  for (const std::string body : {"suite = mellin\nalpha = 2\n", "suite = nope\n", "suite = mellin\nmystery = 1\n",
                                 "suite = dufresne\ndim = 5\nmu = 1\n"}) {
    const fs::path cfg = write_config("bad.cfg", body);
    const Result r = run("run " + cfg.string() + " --out " + out.string());
    EXPECT_EQ(r.code, 2) << body << r.out;
    EXPECT_FALSE(fs::exists(out)) << body;
  }
  EXPECT_EQ(run("run " + (dir_ / "missing.cfg").string()).code, 2);
}

TEST_F(Workdir, RunIsReproducible) {
  const fs::path cfg = write_config("m.cfg", "suite = mellin\ncount = 300\nseed = 3\n");
  const fs::path a = dir_ / "a", b = dir_ / "b";
  ASSERT_EQ(run("run " + cfg.string() + " --out " + a.string()).code, 0);
  ASSERT_EQ(run("--out " + b.string() + " run " + cfg.string()).code, 0);
  for (const char* f : {"report.json", "summary.csv", "samples.csv", "histograms.csv", "manifest.json"})
    EXPECT_TRUE(fs::exists(a / "mellin" / "3" / f)) << f;
  for (const char* f : {"report.json", "summary.csv", "samples.csv", "histograms.csv"})
    EXPECT_EQ(slurp(a / "mellin" / "3" / f), slurp(b / "mellin" / "3" / f)) << f;
  const std::string manifest = slurp(a / "mellin" / "3" / "manifest.json");
  EXPECT_NE(manifest.find("wall_clock_s"), std::string::npos);
  EXPECT_NE(manifest.find("code_version"), std::string::npos);
  EXPECT_FALSE(fs::exists(a / "mellin" / "3" / "report.json.tmp"));
}

TEST_F(Workdir, SeedPrecedence) {
  const fs::path cfg = write_config("m.cfg", "suite = mellin\ncount = 100\nseed = 3\n");
  const fs::path out = dir_ / "out";
  // environment overrides the file, the flag overrides both
  ASSERT_EQ(run("run " + cfg.string(), "GLDIFF_SEED=11 GLDIFF_OUT=" + out.string()).code, 0);
  EXPECT_TRUE(fs::exists(out / "mellin" / "11" / "report.json"));
  ASSERT_EQ(run("--seed 12 run " + cfg.string(), "GLDIFF_SEED=11 GLDIFF_OUT=" + out.string()).code, 0);
  EXPECT_TRUE(fs::exists(out / "mellin" / "12" / "report.json"));
  EXPECT_FALSE(fs::exists(out / "mellin" / "3"));
  EXPECT_EQ(run("run " + cfg.string(), "GLDIFF_SEED=abc").code, 2);
}

TEST_F(Workdir, StatisticalFailureExitsOne) {
  // a tolerance the Lyapunov rates cannot meet on a short horizon
  const fs::path cfg = write_config(
      "l.cfg", "suite = lyapunov\ndim = 1\nmu = 1\nhorizon = 12\npaths = 2\ndt = 0.01\ntolerance = 1e-9\n");
  const Result r = run("run " + cfg.string() + " --out " + (dir_ / "o").string());
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_TRUE(fs::exists(dir_ / "o" / "lyapunov" / "1" / "report.json"));
}

TEST_F(Workdir, TabulateKappa) {
  const fs::path cfg = write_config("k.cfg", "dim = 1\nmu = 1.5\ngrid_points = 4\nlog_lo = -1\nlog_hi = 1\n");
  ASSERT_EQ(run("tabulate-kappa " + cfg.string() + " --out " + (dir_ / "k").string()).code, 0);
  const std::string csv = slurp(dir_ / "k" / "tabulate-kappa" / "1" / "kappa_table.csv");
  EXPECT_EQ(csv.rfind("log_lambda1,kappa11,std_error\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  const fs::path bad = write_config("kb.cfg", "dim = 3\nmu = 0.5\n");
  EXPECT_EQ(run("tabulate-kappa " + bad.string()).code, 2);
}
