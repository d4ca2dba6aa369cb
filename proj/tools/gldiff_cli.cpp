#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "gldiff/config.hpp"
#include "gldiff/parallel.hpp"
#include "gldiff/report.hpp"
#include "gldiff/suites.hpp"

#ifndef GLDIFF_VERSION
#define GLDIFF_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace gldiff;

namespace {

enum Exit { kPass = 0, kStatFail = 1, kConfigError = 2, kRuntimeError = 3 };

struct Overrides {
  std::optional<std::int64_t> seed;
  std::optional<std::string> out;
  unsigned threads = 0;
};

// environment first, then command-line flags
Config apply_overrides(Config c, const Overrides& ov) {
  if (const char* s = std::getenv("GLDIFF_SEED")) c.set("seed", s);
  if (const char* o = std::getenv("GLDIFF_OUT")) c.set("out", o);
  if (ov.seed) c.set("seed", std::to_string(*ov.seed));
  if (ov.out) c.set("out", *ov.out);
  return c;
}

void write_atomic(const fs::path& file, const std::string& content) {
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw DomainError("cannot write " + tmp.string());
    os << content;
    if (!os.flush()) throw DomainError("cannot write " + tmp.string());
  }
  fs::rename(tmp, file);
}

template <class Fn>
std::string render(Fn&& fn) {
  std::ostringstream os;
  fn(os);
  return os.str();
}

std::string utc_now() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

Json config_echo(const Config& c) {
  Json j = Json::object();
  for (const auto& [k, v] : c.values())
    if (k != "out") j[k] = v;
  return j;
}

Json manifest(const std::string& command, const ExperimentConfig& e, const std::string& started, double wall,
              bool passed, int exit_code, const std::vector<std::string>& files) {
  Json m;
  m["command"] = command;
  m["code_version"] = GLDIFF_VERSION;
  m["config"] = config_echo(e.source);
  m["out"] = e.out;
  m["started_utc"] = started;
  m["wall_clock_s"] = wall;
  m["threads"] = worker_count();
  m["passed"] = passed;
  m["exit_code"] = exit_code;
  m["artifacts"] = files;
  return m;
}

int run(const std::string& file, const Overrides& ov) {
  const ExperimentConfig e = make_experiment(apply_overrides(Config::load(file), ov));
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  std::cerr << "running " << e.suite << " (seed " << e.seed << ")\n";
  const VerificationReport rep = run_suite(e);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path dir = fs::path(e.out) / e.suite / std::to_string(e.seed);
  fs::create_directories(dir);
  Json doc = report_json(rep);
  doc["config"] = config_echo(e.source);
  write_atomic(dir / "report.json", doc.dump(2) + "\n");
  write_atomic(dir / "summary.csv", render([&](std::ostream& os) { write_summary_csv(os, rep); }));
  write_atomic(dir / "samples.csv", render([&](std::ostream& os) { write_sample_dump_csv(os, rep); }));
  write_atomic(dir / "histograms.csv", render([&](std::ostream& os) { write_histogram_csv(os, rep); }));
  const int code = rep.passed() ? kPass : kStatFail;
  const std::vector<std::string> files{"report.json", "summary.csv", "samples.csv", "histograms.csv"};
  write_atomic(dir / "manifest.json", manifest("run", e, started, wall, rep.passed(), code, files).dump(2) + "\n");

  for (const auto& t : rep.tests)
    std::cout << (t.passed() ? "PASS " : "FAIL ") << t.label << "  energy p=" << t.energy.p_value
              << (t.expect_reject ? " (negative control)" : "") << "\n";
  for (const auto& m : rep.metrics)
    std::cout << (m.passed ? "PASS " : "FAIL ") << m.name << " = " << m.value << (m.blocking ? "" : "  [info]")
              << "\n";
  std::cout << e.suite << ": " << (rep.passed() ? "passed" : "failed") << "  -> " << dir.string() << "\n";
  return code;
}

int tabulate_kappa(const std::string& file, const Overrides& ov) {
  const ExperimentConfig e = make_experiment(apply_overrides(Config::load(file), ov), false);
  if (!(std::abs(e.mu) > 0.5 * (e.dim - 1))) throw ConfigError("kappa tabulation requires |mu| > (r - 1)/2");
  if (e.dim > 3) throw ConfigError("kappa tabulation supports dim <= 3");
  const std::string started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  RngStream rng(e.seed, 0);
  const KappaTable table = KappaTable::build(e.dim, e.mu, e.kappa, rng);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  const fs::path dir = fs::path(e.out) / "tabulate-kappa" / std::to_string(e.seed);
  fs::create_directories(dir);
  const std::string csv = render([&](std::ostream& os) {
    const auto& axis = table.axis();
    const std::size_t m = axis.size();
    for (int k = 0; k < e.dim; ++k) os << "log_lambda" << k + 1 << ',';
    os << "kappa11,std_error\n" << std::setprecision(12);
    for (std::size_t idx = 0; idx < table.log_values().size(); ++idx) {
      std::size_t rem = idx;
      for (int k = 0; k < e.dim; ++k) {
        os << axis[rem % m] << ',';
        rem /= m;
      }
      const double v = std::exp(table.log_values()[idx]);
      os << v << ',' << v * table.rel_errors()[idx] << '\n';
    }
  });
  write_atomic(dir / "kappa_table.csv", csv);
  write_atomic(dir / "manifest.json",
               manifest("tabulate-kappa", e, started, wall, true, kPass, {"kappa_table.csv"}).dump(2) + "\n");
  std::cout << "kappa table (" << table.log_values().size() << " points) -> " << dir.string() << "\n";
  return kPass;
}

int list_suites() {
  for (const auto& s : suite_catalogue()) std::cout << std::left << std::setw(18) << s.name << s.description << "\n";
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"matrix diffusion identity laboratory"};
  app.require_subcommand(1);
  Overrides ov;
  std::int64_t seed = 0;
  std::string out;
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides config and GLDIFF_SEED)");
  auto* out_opt = app.add_option("--out", out, "output directory (overrides config and GLDIFF_OUT)");
  app.add_option("--threads", ov.threads, "cap on worker threads")->check(CLI::PositiveNumber);

  std::string config;
  auto* run_cmd = app.add_subcommand("run", "run the suite named in a config file");
  run_cmd->add_option("config", config, "config file")->required();
  run_cmd->fallthrough();
  auto* list_cmd = app.add_subcommand("list-suites", "print the catalogue of suites");
  auto* tab_cmd = app.add_subcommand("tabulate-kappa", "tabulate the kappa lattice as CSV");
  tab_cmd->add_option("config", config, "grid config file")->required();
  tab_cmd->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }
  if (*seed_opt) ov.seed = seed;
  if (*out_opt) ov.out = out;
  if (ov.threads) thread_cap() = ov.threads;

  try {
    if (*list_cmd) return list_suites();
    if (*run_cmd) return run(config, ov);
    if (*tab_cmd) return tabulate_kappa(config, ov);
  } catch (const ConfigError& e) {
    std::cerr << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kConfigError;
}
