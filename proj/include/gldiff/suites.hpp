#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "config.hpp"
#include "verify.hpp"

namespace gldiff {

struct SuiteInfo {
  std::string name;
  std::string description;
};

inline const std::vector<SuiteInfo>& suite_catalogue() {
  static const std::vector<SuiteInfo> cat{
      {"dufresne", "integral of M M^T to infinity against the inverse Wishart law; means and omnibus test"},
      {"process-dufresne", "inverse running integral at fixed times against the difference of inverses for -mu"},
      {"bessel-pde", "matrix K-Bessel function solves its second-order PDE; scalar quadrature and matrix Monte Carlo"},
      {"mellin", "multiplier relation of the power functions under the Bessel operator"},
      {"z-flip", "law of Z unchanged by mu -> -mu, with a negative control, plus the kappa identity"},
      {"gig-diagnostic", "conditional law of M^T Z^-1 given Z against the matrix GIG law (exploratory)"},
      {"burke-oioo", "output of the one-input construction against a fresh M path"},
      {"burke-tito", "two-input outputs and the enlarged-filtration noise are Brownian"},
      {"lyapunov", "growth rates of the singular values of M over a long horizon"},
      {"scaling-x", "scaled top log-eigenvalue of X against reflected Brownian motion with drift"},
      {"scaling-z", "scaled bottom log-singular value of Z against the coth-drift diffusion"},
      {"eig-consistency", "spectra of full-matrix Q, X, Z flows against their eigenvalue SDEs"},
      {"stationarity-q", "Q started from inverse Wishart keeps its law; mean trace over time"},
  };
  return cat;
}

inline bool known_suite(const std::string& name) {
  const auto& c = suite_catalogue();
  return std::any_of(c.begin(), c.end(), [&](const SuiteInfo& s) { return s.name == name; });
}

inline std::string suite_names() {
  std::string s;
  for (const auto& e : suite_catalogue()) s += (s.empty() ? "" : ", ") + e.name;
  return s;
}

// Typed view of a Config, checked in full before any computation.
struct ExperimentConfig {
  std::string suite;
  int dim = 2;
  double mu = 3.0;
  int beta = 0;
  std::size_t paths = 5000;
  std::size_t samples = 200000;
  std::size_t kappa_budget = 20000;
  double horizon = 50.0;
  double t = 1.0;
  std::vector<double> times, joint, points, c_ladder;
  double tolerance = 0.07, ks_bound = 0.1, sanity_bound = 0.05;
  double bandwidth = 0.2, control_mu = 2.0, index = 1.5, gamma = 1.0, mu_z = 1.5;
  std::size_t control_paths = 1000;
  int max_dim = 6;
  std::size_t count = 1000;
  KappaTable::Options kappa;
  TestOptions test;
  std::uint64_t seed = 1;
  std::string out;
  Config source;
};

namespace detail {

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

inline void require_times(const std::vector<double>& v, const std::string& key) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    require(v[i] > 0.0, key + " must be positive");
    require(i == 0 || v[i] > v[i - 1], key + " must be strictly ascending");
  }
}

}  // namespace detail

// `need_suite` is false for tabulate-kappa, which uses only the lattice keys.
inline ExperimentConfig make_experiment(const Config& c, bool need_suite = true) {
  using detail::require;
  ExperimentConfig e;
  e.source = c;
  e.suite = c.text("suite");
  if (need_suite)
    require(known_suite(e.suite), "unknown suite '" + e.suite + "'; valid: " + suite_names());
  auto positive_int = [&](const std::string& k) {
    const auto v = c.integer(k);
    require(v > 0, k + " must be positive");
    return static_cast<std::size_t>(v);
  };
  auto positive = [&](const std::string& k) {
    const double v = c.real(k);
    require(v > 0.0 && std::isfinite(v), k + " must be positive");
    return v;
  };
  e.dim = static_cast<int>(c.integer("dim"));
  require(e.dim >= 1 && e.dim <= 16, "dim must lie in [1, 16]");
  e.mu = c.real("mu");
  require(std::isfinite(e.mu), "mu must be finite");
  e.beta = static_cast<int>(c.integer("beta"));
  require(e.beta >= 0 && e.beta <= 2, "beta must be 0, 1 or 2");
  e.paths = positive_int("paths");
  e.samples = positive_int("samples");
  e.kappa_budget = positive_int("kappa_budget");
  e.horizon = positive("horizon");
  e.t = positive("t");
  e.times = c.list("times");
  detail::require_times(e.times, "times");
  e.joint = c.list("joint");
  require(e.joint.size() == 2, "joint must hold two times");
  detail::require_times(e.joint, "joint");
  e.points = c.list("points");
  for (double y : e.points) require(y > 0.0, "points must be positive");
  e.c_ladder = c.list("c_ladder");
  for (std::size_t i = 0; i < e.c_ladder.size(); ++i)
    require(e.c_ladder[i] >= 1.0 && (i == 0 || e.c_ladder[i] > e.c_ladder[i - 1]),
            "c_ladder must be ascending and at least 1");
  e.tolerance = positive("tolerance");
  e.ks_bound = positive("ks_bound");
  e.sanity_bound = positive("sanity_bound");
  e.bandwidth = positive("bandwidth");
  e.control_mu = c.real("control_mu");
  e.control_paths = positive_int("control_paths");
  e.index = c.real("index");
  e.gamma = positive("gamma");
  e.mu_z = c.real("mu_z");
  e.max_dim = static_cast<int>(c.integer("max_dim"));
  require(e.max_dim >= 1 && e.max_dim <= 16, "max_dim must lie in [1, 16]");
  e.count = positive_int("count");
  e.kappa.log_lo = c.real("log_lo");
  e.kappa.log_hi = c.real("log_hi");
  require(e.kappa.log_hi > e.kappa.log_lo, "log_hi must exceed log_lo");
  e.kappa.points = static_cast<int>(c.integer("grid_points"));
  require(e.kappa.points >= 2 && e.kappa.points <= 200, "grid_points must lie in [2, 200]");
  e.kappa.budget = e.kappa_budget;

  TestOptions& o = e.test;
  o.alpha = c.real("alpha");
  require(o.alpha > 0.0 && o.alpha < 1.0, "alpha must lie in (0, 1)");
  o.permutations = positive_int("permutations");
  o.energy_cap = positive_int("energy_cap");
  o.probe_seed = static_cast<std::uint64_t>(c.integer("probe_seed"));
  o.dt = positive("dt");
  o.tail_tol = positive("tail_tol");
  o.mean_tol = positive("mean_tol");
  const auto seed = c.integer("seed");
  require(seed >= 0, "seed must be non-negative");
  e.seed = static_cast<std::uint64_t>(seed);
  e.out = c.text("out");
  require(!e.out.empty(), "out must not be empty");

  // preconditions of the individual suites
  const double half = 0.5 * (e.dim - 1);
  const std::string& s = e.suite;
  if (s == "dufresne" || s == "process-dufresne" || s == "burke-oioo" || s == "burke-tito" ||
      s == "stationarity-q")
    require(2.0 * e.mu > e.dim - 1, s + " requires 2 mu > r - 1");
  if (s == "z-flip" || s == "gig-diagnostic") require(std::abs(e.mu) > half, s + " requires |mu| > (r - 1)/2");
  if (s == "z-flip" && e.control_mu != 0.0)
    require(std::abs(e.control_mu) > half, "control_mu requires |mu| > (r - 1)/2");
  if (s == "eig-consistency") require(std::abs(e.mu_z) > half, "mu_z requires |mu| > (r - 1)/2");
  if (s == "process-dufresne" || s == "z-flip" || s == "stationarity-q" || s == "burke-oioo")
    require(e.times.front() >= o.dt, "times must not be below dt");
  if (s == "bessel-pde") require(e.mu > half, "bessel-pde requires mu > (r - 1)/2");
  if (s == "mellin") require(e.count <= 1000000, "count at most 1e6");
  return e;
}

namespace detail {

inline void absorb(VerificationReport& into, VerificationReport&& part) {
  for (auto& t : part.tests) into.tests.push_back(std::move(t));
  for (auto& m : part.metrics) into.metrics.push_back(std::move(m));
  for (auto& n : part.notes) into.notes.push_back(std::move(n));
  for (auto& s : part.samples) into.samples.push_back(std::move(s));
  into.runtime_s += part.runtime_s;
}

}  // namespace detail

inline VerificationReport run_suite(const ExperimentConfig& e) {
  RngStream rng(e.seed, 0);
  const std::string& s = e.suite;
  const TestOptions& o = e.test;
  VerificationReport rep;
  if (s == "dufresne") {
    rep = dufresne_test(e.dim, e.mu, e.paths, o, rng);
  } else if (s == "process-dufresne") {
    rep = process_dufresne_test(e.dim, e.mu, e.times, {e.joint[0], e.joint[1]}, e.paths, o, rng);
  } else if (s == "bessel-pde") {
    rep = bessel_pde_test(e.index, e.points, e.dim, e.mu, e.samples, rng);
  } else if (s == "mellin") {
    rep = mellin_test(e.count, e.max_dim, rng);
  } else if (s == "z-flip") {
    std::optional<double> control;
    if (e.control_mu != 0.0) control = e.control_mu;
    rep = z_sign_flip_test(e.dim, e.mu, e.times, {e.joint[0], e.joint[1]}, e.paths, control, o, rng);
    RMat a = RMat::Zero(e.dim, e.dim);
    for (int i = 0; i < e.dim; ++i) a(i, i) = i + 1.0;
    RngStream ks = rng.split(77);
    detail::absorb(rep, kappa_identity_test(e.dim, e.mu, a, e.samples, ks));
  } else if (s == "gig-diagnostic") {
    rep = conditional_gig_diagnostic(e.dim, e.mu, e.t, e.paths, e.bandwidth, o, rng);
  } else if (s == "burke-oioo" || s == "burke-tito") {
    BurkeOptions bo;
    bo.oioo_times = e.times;
    bo.control_paths = e.control_paths;
    bo.include_oioo = s == "burke-oioo";
    bo.include_tito = bo.include_enlarged = s == "burke-tito";
    rep = burke_tests(e.dim, e.mu, e.paths, bo, o, rng);
  } else if (s == "lyapunov") {
    rep = lyapunov_test(e.dim, e.mu, e.horizon, e.paths, e.tolerance, o, rng);
  } else if (s == "scaling-x" || s == "scaling-z") {
    ScalingLadder l;
    l.gamma = e.gamma;
    l.cs = e.c_ladder;
    l.t = e.t;
    l.dim = e.dim;
    l.target = s == "scaling-x" ? ScalingTarget::x_top : ScalingTarget::z_bottom;
    l.paths = e.paths;
    l.oracle_dt = o.dt;
    rep = scaling_test(l, e.ks_bound, e.sanity_bound, rng);
  } else if (s == "eig-consistency") {
    EigConsistencyOptions eo;
    eo.t = e.t;
    eo.mu_q = eo.mu_x = e.mu;
    eo.mu_z = e.mu_z;
    if (e.beta) eo.betas = {e.beta};
    eo.kappa = e.kappa;
    rep = eig_consistency_test(e.dim, e.paths, eo, o, rng);
  } else if (s == "stationarity-q") {
    rep = stationarity_q_test(e.dim, e.mu, e.times, e.paths, o, rng);
  } else {
    throw ConfigError("unknown suite '" + s + "'; valid: " + suite_names());
  }
  rep.identity = s;
  rep.seed = e.seed;
  rep.alpha = o.alpha;
  return rep;
}

}  // namespace gldiff
