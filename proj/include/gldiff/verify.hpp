#pragma once

#include <boost/math/special_functions/gamma.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <optional>
#include <string>
#include <vector>

#include "bessel.hpp"
#include "errors.hpp"
#include "flows.hpp"
#include "laws.hpp"
#include "matcore.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "spectra.hpp"
#include "stats.hpp"

namespace gldiff {

struct TestOptions {
  double alpha = 0.01;
  std::size_t permutations = 200;
  std::size_t energy_cap = 1000;
  std::size_t min_samples = 500;
  std::uint64_t probe_seed = 7;
  double dt = 1e-3;
  double tail_tol = 1e-4;
  double mean_tol = 0.05;
};

struct FunctionalStat {
  std::string name;
  MeanSE a, b;
  KSResult ks;
  std::vector<double> a_values, b_values;
};

struct NamedSample {
  std::string name;
  std::vector<double> values;
};

struct TwoSampleResult {
  std::string label;
  std::size_t n_a = 0, n_b = 0;
  std::vector<FunctionalStat> functionals;
  double ks_min_p_bonferroni = 1.0;
  EnergyResult energy;
  bool rejected = false;
  bool expect_reject = false;  // negative control
  bool passed() const { return rejected == expect_reject; }
};

struct Metric {
  std::string name;
  double value = 0.0;
  double std_error = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  bool passed = true;
  bool blocking = true;
};

struct VerificationReport {
  std::string identity;
  std::uint64_t seed = 0;
  double alpha = 0.01;
  std::vector<TwoSampleResult> tests;
  std::vector<Metric> metrics;
  std::vector<std::string> notes;
  std::vector<NamedSample> samples;  // raw draws behind the metrics, for dumps
  double runtime_s = 0.0;  // not part of the reproducible record

  bool passed() const {
    for (const auto& t : tests)
      if (!t.passed()) return false;
    for (const auto& m : metrics)
      if (m.blocking && !m.passed) return false;
    return true;
  }
  const Metric* metric(const std::string& name) const {
    for (const auto& m : metrics)
      if (m.name == name) return &m;
    return nullptr;
  }
  const TwoSampleResult* test(const std::string& label) const {
    for (const auto& t : tests)
      if (t.label == label) return &t;
    return nullptr;
  }
};

inline Metric abs_metric(std::string name, double value, double se, double target, double tol, bool blocking = true) {
  return {std::move(name), value, se, target, tol, std::abs(value - target) <= tol, blocking};
}

inline Metric below_metric(std::string name, double value, double bound, bool blocking = true) {
  return {std::move(name), value, 0.0, bound, 0.0, value < bound, blocking};
}

inline Metric above_metric(std::string name, double value, double bound, bool blocking = true) {
  return {std::move(name), value, 0.0, bound, 0.0, value > bound, blocking};
}

// ---------------------------------------------------------------------------

inline TwoSampleResult compare_features(std::string label, const std::vector<std::string>& names,
                                        const std::vector<std::vector<double>>& fa,
                                        const std::vector<std::vector<double>>& fb, const TestOptions& opt,
                                        RngStream& rng) {
  if (fa.size() < opt.min_samples || fb.size() < opt.min_samples)
    throw InsufficientSamples("two-sample test needs at least " + std::to_string(opt.min_samples) + " per side");
  TwoSampleResult res;
  res.label = std::move(label);
  res.n_a = fa.size();
  res.n_b = fb.size();
  double min_p = 1.0;
  for (std::size_t k = 0; k < names.size(); ++k) {
    std::vector<double> a(fa.size()), b(fb.size());
    for (std::size_t i = 0; i < fa.size(); ++i) a[i] = fa[i][k];
    for (std::size_t i = 0; i < fb.size(); ++i) b[i] = fb[i][k];
    FunctionalStat fs{names[k], mean_se(a), mean_se(b), ks_two_sample(a, b), a, b};
    min_p = std::min(min_p, fs.ks.p_value);
    res.functionals.push_back(std::move(fs));
  }
  res.ks_min_p_bonferroni = std::min(1.0, min_p * names.size());
  res.energy = energy_test(fa, fb, opt.permutations, opt.energy_cap, rng);
  res.rejected = !(res.energy.p_value > opt.alpha);
  return res;
}

inline TwoSampleResult compare_matrices(std::string label, const std::vector<RMat>& a, const std::vector<RMat>& b,
                                        const FunctionalSet& fs, const TestOptions& opt, RngStream& rng) {
  std::vector<std::string> names;
  for (const auto& f : fs) names.push_back(f.name);
  return compare_features(std::move(label), names, apply_functionals(a, fs), apply_functionals(b, fs), opt, rng);
}

// KS per functional with Bonferroni, and the energy-distance omnibus which
// alone decides pass/fail.
inline VerificationReport two_sample_test(const std::vector<RMat>& a, const std::vector<RMat>& b,
                                          const FunctionalSet& fs, const TestOptions& opt, RngStream& rng) {
  VerificationReport rep;
  rep.identity = "two-sample";
  rep.seed = rng.seed();
  rep.alpha = opt.alpha;
  rep.tests.push_back(compare_matrices("A vs B", a, b, fs, opt, rng));
  return rep;
}

namespace detail {

template <class T, class Fn>
std::vector<T> per_path(std::size_t n, const RngStream& base, Fn&& fn) {
  std::vector<T> out(n);
  parallel_for(n, [&](std::size_t i) {
    RngStream s(base.seed(), i);
    out[i] = fn(s);
  });
  return out;
}

inline std::vector<std::string> names_of(const FunctionalSet& fs, const std::string& suffix = "") {
  std::vector<std::string> n;
  for (const auto& f : fs) n.push_back(f.name + suffix);
  return n;
}

// Feature rows from matrices observed at two times, concatenated.
inline std::vector<std::vector<double>> joint_features(const std::vector<std::vector<RMat>>& at, std::size_t i1,
                                                       std::size_t i2, const FunctionalSet& fs) {
  std::vector<std::vector<double>> out(at.size());
  for (std::size_t p = 0; p < at.size(); ++p) {
    for (const auto& f : fs) out[p].push_back(f.apply(at[p][i1]));
    for (const auto& f : fs) out[p].push_back(f.apply(at[p][i2]));
  }
  return out;
}

inline std::vector<RMat> column(const std::vector<std::vector<RMat>>& at, std::size_t k) {
  std::vector<RMat> out(at.size());
  for (std::size_t p = 0; p < at.size(); ++p) out[p] = at[p][k];
  return out;
}

inline std::vector<std::size_t> step_indices(const std::vector<double>& times, double dt) {
  std::vector<std::size_t> out;
  for (double t : times) {
    if (!(t > 0.0)) throw PreconditionError("observation times must be positive");
    out.push_back(static_cast<std::size_t>(std::lround(t / dt)));
  }
  return out;
}

struct Observed {
  std::vector<RMat> m;  // M at the observation times
  std::vector<RMat> a;  // A at the observation times
  RMat a_total;         // A_infinity when run to the tail
};

// Streams an exponential-scheme M path of exponent drift `drift`, recording M
// and A = int_0 M M^T at the given step counts, optionally continuing until
// the tail rule for A_infinity holds.
inline Observed observe_M(const FlowParams& p, double drift, const std::vector<std::size_t>& at, bool to_tail,
                          RngStream& rng) {
  const int r = p.dim;
  const NoiseSpec ns = p.noise();
  const std::size_t last = *std::max_element(at.begin(), at.end());
  const std::size_t nmax = static_cast<std::size_t>(std::lround(p.horizon_max / p.dt));
  const double rate = to_tail ? tail_decay_rate(p, -drift) : 0.0;
  Observed o;
  o.m.resize(at.size());
  o.a.resize(at.size());
  RMat m = identity<double>(r), a = RMat::Zero(r, r), prev = identity<double>(r), a_last = a;
  for (std::size_t k = 1;; ++k) {
    if (k > nmax) throw HorizonTooShort("tail not below tolerance by horizon_max");
    RMat e = increment_factor<double>(p, bm_increment<double>(ns, p.dt, rng), drift, p.dt);
    m = m * e;
    RMat y = m * m.transpose();
    a += 0.5 * p.dt * (prev + y);
    prev = y;
    for (std::size_t j = 0; j < at.size(); ++j)
      if (at[j] == k) {
        o.m[j] = m;
        o.a[j] = hermitian_part(a);
      }
    if (k < last) continue;
    if (!to_tail) break;
    // the remainder must be small against what accrued after the last observation
    if (k == last) a_last = a;
    if (y.trace() / rate < p.tail_tol * (a - a_last).trace()) break;
  }
  o.a_total = hermitian_part(a);
  return o;
}

inline std::string time_label(double t) {
  std::string s = std::to_string(t);
  s.erase(s.find_last_not_of('0') + 1);
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// A_infinity of M^{(-mu)} against direct inverse Wishart(2 mu) draws.

inline VerificationReport dufresne_test(int r, double mu, std::size_t paths, const TestOptions& opt, RngStream& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  FlowParams p;
  p.dim = r;
  p.mu = mu;
  p.drift_sign = DriftSign::minus;
  p.dt = opt.dt;
  p.tail_tol = opt.tail_tol;
  p.validate();
  p.require_convergent();
  VerificationReport rep;
  rep.identity = "dufresne";
  rep.seed = rng.seed();
  rep.alpha = opt.alpha;
  auto a = detail::per_path<RMat>(paths, rng.split(1), [&](RngStream& s) { return sample_A_infinity<double>(p, s).matrix(); });
  WishartSpec<double> ws{r, 2.0 * mu, std::nullopt};
  auto w = detail::per_path<RMat>(paths, rng.split(2), [&](RngStream& s) { return sample_inv_wishart(ws, s).matrix(); });
  RngStream perm = rng.split(3);
  rep.tests.push_back(compare_matrices("A_inf vs inverse Wishart", a, w, spd_functionals(r, opt.probe_seed), opt, perm));
  if (2.0 * mu > r + 1) {
    const double target = 1.0 / (2.0 * mu - r - 1.0);
    for (int i = 0; i < r; ++i)
      for (int j = i; j < r; ++j) {
        std::vector<double> v(paths);
        for (std::size_t k = 0; k < paths; ++k) v[k] = a[k](i, j);
        const MeanSE m = mean_se(v);
        const std::string nm = "mean_A_" + std::to_string(i + 1) + std::to_string(j + 1);
        rep.metrics.push_back(abs_metric(nm, m.mean, m.std_error, i == j ? target : 0.0, opt.mean_tol * target));
      }
  } else {
    rep.notes.push_back("inverse Wishart mean is infinite for 2 mu <= r + 1; mean check skipped");
  }
  if (r == 1) {
    // A_inf = 1/(2 xi), xi ~ Gamma(mu)
    std::vector<double> v(paths);
    for (std::size_t k = 0; k < paths; ++k) v[k] = a[k](0, 0);
    auto cdf = [mu](double x) { return x > 0.0 ? boost::math::gamma_q(mu, 0.5 / x) : 0.0; };
    const KSResult ks = ks_one_sample(v, cdf);
    rep.metrics.push_back(above_metric("ks_inverse_gamma_p", ks.p_value, opt.alpha));
    rep.metrics.push_back({"ks_inverse_gamma_D", ks.statistic, 0.0, 0.0, 0.0, true, false});
  }
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// (A_t^{(mu)})^{-1} against (A_t^{(-mu)})^{-1} - (A_inf^{(-mu)})^{-1}, at each
// time and jointly at a pair of times.
inline VerificationReport process_dufresne_test(int r, double mu, const std::vector<double>& times,
                                                std::pair<double, double> joint, std::size_t paths,
                                                const TestOptions& opt, RngStream& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  FlowParams p;
  p.dim = r;
  p.mu = mu;
  p.dt = opt.dt;
  p.tail_tol = opt.tail_tol;
  p.validate();
  p.require_convergent();
  std::vector<double> all = times;
  all.push_back(joint.first);
  all.push_back(joint.second);
  const auto steps = detail::step_indices(all, p.dt);
  VerificationReport rep;
  rep.identity = "process-dufresne";
  rep.seed = rng.seed();
  rep.alpha = opt.alpha;
  auto lhs = detail::per_path<std::vector<RMat>>(paths, rng.split(1), [&](RngStream& s) {
    auto o = detail::observe_M(p, mu, steps, false, s);
    std::vector<RMat> out;
    for (const auto& a : o.a) out.push_back(SPDMatrix<double>(a).inverse());
    return out;
  });
  std::vector<int> bad(paths, 0);
  auto rhs = detail::per_path<std::vector<RMat>>(paths, rng.split(2), [&](RngStream& s) {
    auto o = detail::observe_M(p, -mu, steps, true, s);
    const RMat inf_inv = SPDMatrix<double>(o.a_total).inverse();
    std::vector<RMat> out;
    for (const auto& a : o.a) out.push_back(hermitian_part(RMat(SPDMatrix<double>(a).inverse() - inf_inv)));
    return out;
  });
  // Loewner positivity of the right side, path by path
  std::vector<std::vector<RMat>> rhs_ok;
  std::size_t failures = 0;
  for (auto& v : rhs) {
    bool ok = true;
    for (const auto& d : v) ok = ok && Eigen::LLT<RMat>(d).info() == Eigen::Success && eigenvalues<double>(d).minCoeff() > 0.0;
    if (ok) {
      rhs_ok.push_back(std::move(v));
    } else {
      ++failures;
    }
  }
  rep.metrics.push_back({"rhs_not_spd_fraction", double(failures) / paths, 0.0, 0.0, 0.0, failures == 0, true});
  const FunctionalSet fs = spd_functionals(r, opt.probe_seed);
  RngStream perm = rng.split(3);
  for (std::size_t k = 0; k < times.size(); ++k)
    rep.tests.push_back(compare_matrices("t=" + detail::time_label(times[k]), detail::column(lhs, k),
                                         detail::column(rhs_ok, k), fs, opt, perm));
  const std::size_t j1 = times.size(), j2 = times.size() + 1;
  std::vector<std::string> names = detail::names_of(fs, "@t1");
  for (auto& n : detail::names_of(fs, "@t2")) names.push_back(n);
  rep.tests.push_back(compare_features("joint t=(" + detail::time_label(joint.first) + "," + detail::time_label(joint.second) + ")",
                                       names, detail::joint_features(lhs, j1, j2, fs),
                                       detail::joint_features(rhs_ok, j1, j2, fs), opt, perm));
  rep.notes.push_back("process-level law tested through two-time marginals");
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// Z_t = M_t^{-1} A_t built from M^{(+mu)} and from M^{(-mu)}.
inline VerificationReport z_sign_flip_test(int r, double mu, const std::vector<double>& times,
                                           std::pair<double, double> joint, std::size_t paths,
                                           std::optional<double> control_mu, const TestOptions& opt, RngStream& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!(std::abs(mu) > 0.5 * (r - 1))) throw PreconditionError("requires |mu| > (r - 1)/2");
  FlowParams p;
  p.dim = r;
  p.mu = mu;
  p.dt = opt.dt;
  p.validate();
  std::vector<double> all = times;
  all.push_back(joint.first);
  all.push_back(joint.second);
  const auto steps = detail::step_indices(all, p.dt);
  auto z_paths = [&](double drift, const RngStream& base) {
    return detail::per_path<std::vector<RMat>>(paths, base, [&](RngStream& s) {
      auto o = detail::observe_M(p, drift, steps, false, s);
      std::vector<RMat> out;
      for (std::size_t k = 0; k < o.m.size(); ++k) out.push_back(o.m[k].partialPivLu().solve(o.a[k]));
      return out;
    });
  };
  VerificationReport rep;
  rep.identity = "z-flip";
  rep.seed = rng.seed();
  rep.alpha = opt.alpha;
  auto zp = z_paths(mu, rng.split(1));
  auto zm = z_paths(-mu, rng.split(2));
  const FunctionalSet fs = matrix_functionals(r, opt.probe_seed);
  RngStream perm = rng.split(3);
  for (std::size_t k = 0; k < times.size(); ++k)
    rep.tests.push_back(compare_matrices("t=" + detail::time_label(times[k]), detail::column(zp, k),
                                         detail::column(zm, k), fs, opt, perm));
  const std::size_t j1 = times.size(), j2 = times.size() + 1;
  std::vector<std::string> names = detail::names_of(fs, "@t1");
  for (auto& n : detail::names_of(fs, "@t2")) names.push_back(n);
  rep.tests.push_back(compare_features("joint t=(" + detail::time_label(joint.first) + "," + detail::time_label(joint.second) + ")",
                                       names, detail::joint_features(zp, j1, j2, fs),
                                       detail::joint_features(zm, j1, j2, fs), opt, perm));
  if (control_mu) {
    auto zc = z_paths(*control_mu, rng.split(4));
    const std::size_t k = times.size() - 1;
    auto res = compare_matrices("control mu=" + detail::time_label(mu) + " vs " + detail::time_label(*control_mu),
                                detail::column(zp, k), detail::column(zc, k), fs, opt, perm);
    res.expect_reject = true;
    rep.tests.push_back(std::move(res));
  }
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// kappa_mu(I, A) - kappa_{-mu}(I, A) = 2 mu I, and diagonality for diagonal A.
inline VerificationReport kappa_identity_test(int r, double mu, const RMat& a, std::size_t budget, RngStream& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  VerificationReport rep;
  rep.identity = "kappa-identity";
  rep.seed = rng.seed();
  RngStream s1 = rng.split(1), s2 = rng.split(2);
  const RMat id = identity<double>(r);
  KappaEstimate kp = kappa_mean(mu, id, a, budget, s1);
  KappaEstimate km = kappa_mean(-mu, id, a, budget, s2);
  const RMat d = kp.mean - km.mean - 2.0 * mu * id;
  const RMat var = kp.std_error.cwiseProduct(kp.std_error) + km.std_error.cwiseProduct(km.std_error);
  const double z = d.norm() / std::sqrt(var.sum());
  rep.metrics.push_back({"identity_residual_norm", d.norm(), std::sqrt(var.sum()), 0.0, 3.0 * std::sqrt(var.sum()), z < 3.0, true});
  const bool diagonal = (a - RMat(a.diagonal().asDiagonal())).norm() == 0.0;
  if (diagonal) {
    double worst = 0.0;
    for (const KappaEstimate* k : {&kp, &km})
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j)
          if (i != j) worst = std::max(worst, std::abs(k->mean(i, j)) / k->std_error(i, j));
    rep.metrics.push_back(below_metric("offdiag_max_sigma", worst, 3.0));
  }
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// Law of M_t^T A_t^{-1} M_t given Z_t for M of drift -mu, which is
// eta_{-mu, I, (Z Z^T)^{-1}}, by nearest-neighbour conditioning. The
// conditional mean of its trace depends on Z only through the singular values,
// so neighbours are selected in log singular-value coordinates.
inline VerificationReport conditional_gig_diagnostic(int r, double mu, double t, std::size_t paths, double bandwidth,
                                                     const TestOptions& opt, RngStream& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!(std::abs(mu) > 0.5 * (r - 1))) throw PreconditionError("requires |mu| > (r - 1)/2");
  FlowParams p;
  p.dim = r;
  p.mu = mu;
  p.dt = opt.dt;
  p.validate();
  const std::vector<std::size_t> steps{static_cast<std::size_t>(std::lround(t / p.dt))};
  struct Row {
    RVec logsv;
    double trw;
  };
  auto rows = detail::per_path<Row>(paths, rng.split(1), [&](RngStream& s) {
    auto o = detail::observe_M(p, -mu, steps, false, s);
    const RMat z = o.m[0].partialPivLu().solve(o.a[0]);
    const RMat w = o.m[0].transpose() * SPDMatrix<double>(o.a[0]).inverse() * o.m[0];
    return Row{singular_values<double>(z).array().log().matrix(), w.trace()};
  });
  RVec ref(r);
  for (int i = 0; i < r; ++i) {
    std::vector<double> v(paths);
    for (std::size_t k = 0; k < paths; ++k) v[k] = rows[k].logsv[i];
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    ref[i] = v[v.size() / 2];
  }
  // oracle: trace of the mean of eta_{-mu, I, diag(1/s^2)}
  const RVec s = ref.array().exp().matrix();
  double oracle;
  if (r == 1) {
    oracle = gig_mean(-mu, 1.0, 1.0 / (s[0] * s[0]));
  } else {
    MatrixGIGSpec spec{r, -mu, identity<double>(r), RMat(s.cwiseProduct(s).cwiseInverse().asDiagonal())};
    McmcOptions mo;
    mo.samples = 40000;
    RngStream gs = rng.split(2);
    GigChain ch = sample_matrix_gig(spec, mo, gs);
    oracle = 0.0;
    for (const auto& x : ch.samples) oracle += x.trace();
    oracle /= ch.samples.size();
  }
  VerificationReport rep;
  rep.identity = "gig-diagnostic";
  rep.seed = rng.seed();
  rep.alpha = opt.alpha;
  const double tol = r == 1 ? 0.10 : 0.15;
  double prev_err = INFINITY;
  for (double h : {bandwidth, 0.5 * bandwidth}) {
    std::vector<double> sel;
    for (const auto& row : rows)
      if ((row.logsv - ref).cwiseAbs().maxCoeff() < h) sel.push_back(row.trw);
    if (sel.size() < 300)
      throw InsufficientNeighbors(std::to_string(sel.size()) + " paths within bandwidth " + std::to_string(h));
    const MeanSE m = mean_se(sel);
    const double err = std::abs(m.mean / oracle - 1.0);
    Metric mt{"conditional_mean_tr_h=" + detail::time_label(h), m.mean, m.std_error, oracle, tol * oracle,
              err <= tol, false};
    rep.metrics.push_back(mt);
    rep.metrics.push_back({"neighbours_h=" + detail::time_label(h), double(sel.size()), 0.0, 300.0, 0.0, true, false});
    if (h < bandwidth)
      rep.metrics.push_back({"bias_decreases_on_halving", err, 0.0, prev_err, 0.0, err < prev_err, false});
    prev_err = err;
  }
  rep.notes.push_back("exploratory diagnostic; metrics are non-blocking");
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// Burke-type identities: the output-input relation of the one-input
// construction against a fresh M path, and the Brownian battery for the
// two-input outputs (F, G) and the enlarged-filtration noise hat B.
struct BurkeOptions {
  std::vector<double> oioo_times{0.5, 1.0};
  std::size_t control_paths = 1000;
  bool include_oioo = true;
  bool include_tito = true;
  bool include_enlarged = true;
};

namespace detail {

struct IncrementBattery {
  std::vector<Metric> metrics;
  double ks_min_p_bonferroni = 1.0;
};

// entries[k][e]: k-th path, e-th scalar increment (each should be N(0, h)).
inline IncrementBattery normal_battery(const std::string& prefix, const std::vector<std::vector<double>>& entries,
                                       const std::vector<std::string>& names, double h, double alpha) {
  IncrementBattery b;
  const std::size_t ne = names.size(), n = entries.size();
  double min_p = 1.0, pooled = 0.0;
  const double sd = std::sqrt(h);
  for (std::size_t e = 0; e < ne; ++e) {
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = entries[k][e];
    KSResult ks = ks_one_sample(v, [sd](double x) { return 0.5 * std::erfc(-x / (sd * std::sqrt(2.0))); });
    min_p = std::min(min_p, ks.p_value);
    const double var = sample_variance(v);
    pooled += var;
    b.metrics.push_back(abs_metric(prefix + "var_" + names[e], var, h * std::sqrt(2.0 / n), h, 0.05 * h, false));
  }
  pooled /= ne;
  b.ks_min_p_bonferroni = std::min(1.0, min_p * ne);
  b.metrics.push_back(above_metric(prefix + "ks_normal_bonferroni_p", b.ks_min_p_bonferroni, alpha));
  b.metrics.push_back(abs_metric(prefix + "pooled_var", pooled, h * std::sqrt(2.0 / (n * ne)), h, 0.05 * h));
  return b;
}

inline std::vector<double> flat(const RMat& m) {
  std::vector<double> v;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) v.push_back(m(i, j));
  return v;
}

inline std::vector<std::string> entry_names(int r, const std::string& tag) {
  std::vector<std::string> v;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) v.push_back(tag + "_" + std::to_string(i + 1) + std::to_string(j + 1));
  return v;
}

}  // namespace detail

inline VerificationReport burke_tests(int r, double mu, std::size_t paths, const BurkeOptions& bo,
                                      const TestOptions& opt, RngStream& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  FlowParams p;
  p.dim = r;
  p.mu = mu;
  p.dt = opt.dt;
  p.tail_tol = opt.tail_tol;
  p.validate();
  p.require_convergent();
  VerificationReport rep;
  rep.identity = "burke";
  rep.seed = rng.seed();
  rep.alpha = opt.alpha;
  RngStream perm = rng.split(9);

  // one input, one output
  if (bo.include_oioo) {
    FlowParams po = p;
    po.horizon = *std::max_element(bo.oioo_times.begin(), bo.oioo_times.end());
    const auto steps = detail::step_indices(bo.oioo_times, p.dt);
    using Pair = std::pair<std::vector<RMat>, std::vector<RMat>>;
    auto obs = detail::per_path<Pair>(paths, rng.split(1), [&](RngStream& s) {
      auto [lhs, rhs] = burke_oioo_path<double>(po, s);
      Pair out;
      for (std::size_t k : steps) {
        out.first.push_back(lhs.at(k));
        out.second.push_back(rhs.at(k));
      }
      return out;
    });
    const FunctionalSet fs = matrix_functionals(r, opt.probe_seed);
    for (std::size_t j = 0; j < steps.size(); ++j) {
      std::vector<RMat> a(paths), b(paths);
      for (std::size_t k = 0; k < paths; ++k) {
        a[k] = obs[k].first[j];
        b[k] = obs[k].second[j];
      }
      rep.tests.push_back(compare_matrices("oioo t=" + detail::time_label(bo.oioo_times[j]), a, b, fs, opt, perm));
    }
  }

  // two inputs, two outputs: increments of F and G over [0,1] and [1,2]
  if (bo.include_tito) {
    const int m1 = static_cast<int>(std::lround(1.0 / p.dt));
    FlowParams pt = p;
    pt.horizon = 2.0;
    auto fg_increments = [&](std::size_t n, const RngStream& base, bool compensated) {
      return detail::per_path<std::vector<double>>(n, base, [&](RngStream& s) {
        auto [f, g] = burke_F_G<double>(pt, s, compensated);
        std::vector<double> v;
        for (const RMat& d : {RMat(f.at(m1) - f.at(0)), RMat(f.at(2 * m1) - f.at(m1)), RMat(g.at(m1) - g.at(0)),
                              RMat(g.at(2 * m1) - g.at(m1))})
          for (double x : detail::flat(d)) v.push_back(x);
        return v;
      });
    };
    auto inc = fg_increments(paths, rng.split(2), true);
    std::vector<std::string> names;
    for (const char* tag : {"F01", "F12", "G01", "G12"})
      for (auto& n : detail::entry_names(r, tag)) names.push_back(n);
    auto battery = detail::normal_battery("tito_", inc, names, 1.0, opt.alpha);
    for (auto& m : battery.metrics) rep.metrics.push_back(std::move(m));
    // same-entry correlations: F across intervals, G across intervals, F against G
    const std::size_t rr = static_cast<std::size_t>(r) * r;
    const double bound = 3.0 / std::sqrt(static_cast<double>(paths));
    auto col = [&](std::size_t e) {
      std::vector<double> v(paths);
      for (std::size_t k = 0; k < paths; ++k) v[k] = inc[k][e];
      return v;
    };
    double worst_all = 0.0;
    for (std::size_t e = 0; e < rr; ++e) {
      const std::pair<std::size_t, std::size_t> pairs[] = {{e, rr + e}, {2 * rr + e, 3 * rr + e}, {e, 2 * rr + e}, {rr + e, 3 * rr + e}};
      for (auto [i, j] : pairs) {
        const double c = correlation(col(i), col(j));
        rep.metrics.push_back({"corr_" + names[i] + "_" + names[j], c, 1.0 / std::sqrt(double(paths)), 0.0, bound,
                               std::abs(c) < bound, true});
      }
    }
    for (std::size_t i = 0; i < names.size(); ++i)
      for (std::size_t j = i + 1; j < names.size(); ++j) worst_all = std::max(worst_all, std::abs(correlation(col(i), col(j))));
    rep.metrics.push_back({"max_abs_corr_all_pairs", worst_all, 0.0, 0.0, bound, worst_all < bound, false});

    // negative control without the 2 mu I t compensator
    {
      auto ctrl = fg_increments(std::min(paths, bo.control_paths), rng.split(3), false);
      auto cb = detail::normal_battery("control_", ctrl, names, 1.0, opt.alpha);
      rep.metrics.push_back({"control_rejects_normality", cb.ks_min_p_bonferroni, 0.0, opt.alpha, 0.0,
                             cb.ks_min_p_bonferroni <= opt.alpha, true});
    }
  }

  // hat B of the enlarged filtration over [0, 1]
  if (bo.include_enlarged) {
    FlowParams pe = p;
    pe.horizon = 1.0;
    auto bh = detail::per_path<std::vector<double>>(paths, rng.split(4), [&](RngStream& s) {
      auto path = enlarged_noise<double>(pe, s);
      return detail::flat(path.at(path.size() - 1));
    });
    auto eb = detail::normal_battery("enlarged_", bh, detail::entry_names(r, "Bhat01"), 1.0, opt.alpha);
    for (auto& m : eb.metrics) rep.metrics.push_back(std::move(m));
  }
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// Growth rates of the singular values of M^{(mu)}, averaged over paths.
inline VerificationReport lyapunov_test(int r, double mu, double horizon, std::size_t paths, double tol,
                                        const TestOptions& opt, RngStream& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  FlowParams p;
  p.dim = r;
  p.mu = mu;
  p.dt = opt.dt;
  p.horizon = horizon;
  p.validate();
  auto est = detail::per_path<RVec>(paths, rng.split(1), [&](RngStream& s) {
    return lyapunov_exponents(evolve_M<double>(p, s), 0.0);
  });
  VerificationReport rep;
  rep.identity = "lyapunov";
  rep.seed = rng.seed();
  rep.alpha = opt.alpha;
  for (int i = 0; i < r; ++i) {
    std::vector<double> v(paths);
    for (std::size_t k = 0; k < paths; ++k) v[k] = est[k][i];
    const MeanSE m = paths > 1 ? mean_se(v) : MeanSE{v[0], 0.0};
    const std::string idx = std::to_string(i + 1);
    rep.metrics.push_back(abs_metric("exponent_" + idx + "_vs_mu+(i-1)/2", m.mean, m.std_error, mu + 0.5 * i, tol));
    rep.metrics.push_back(abs_metric("exponent_" + idx + "_vs_mu+i-(r+1)/2", m.mean, m.std_error,
                                     mu + (i + 1) - 0.5 * (r + 1), tol, false));
    rep.samples.push_back({"exponent_" + idx, std::move(v)});
  }
  rep.notes.push_back("the rates must sum to mu r since log det M_t = tr B_t + mu r t");
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// Time-scaled extreme log-eigenvalue against the limit law.
inline VerificationReport scaling_test(const ScalingLadder& ladder, double ks_bound, double sanity_bound,
                                       RngStream& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  ScalingResult res = scaled_limit_experiment(ladder, rng);
  VerificationReport rep;
  const bool x = ladder.target == ScalingTarget::x_top;
  rep.identity = x ? "scaling-x" : "scaling-z";
  rep.seed = rng.seed();
  const double g = ladder.gamma, t = ladder.t;
  auto cdf = [&](double y) { return x ? reflected_bm_cdf(y, g, t) : drifted_bes3_cdf(y, g, t); };
  for (std::size_t i = 0; i < res.rungs.size(); ++i) {
    const auto& rung = res.rungs[i];
    const KSResult ks = ks_one_sample(rung.samples, cdf);
    const bool last = i + 1 == res.rungs.size();
    rep.metrics.push_back(below_metric("ks_D_c=" + detail::time_label(rung.c), ks.statistic, ks_bound, last));
    const KSResult ks2 = ks_two_sample(rung.samples, res.oracle);
    rep.metrics.push_back({"ks_D_vs_euler_oracle_c=" + detail::time_label(rung.c), ks2.statistic, 0.0, ks_bound, 0.0,
                           ks2.statistic < ks_bound, false});
    rep.samples.push_back({"scaled_c=" + detail::time_label(rung.c), rung.samples});
    if (x && !rung.lower.empty()) {
      std::vector<double> lo = rung.lower;
      std::sort(lo.begin(), lo.end());
      rep.metrics.push_back({"lower_q99_c=" + detail::time_label(rung.c), lo[static_cast<std::size_t>(0.99 * (lo.size() - 1))],
                             0.0, 0.0, 0.0, true, false});
    }
  }
  rep.samples.push_back({"limit_oracle", res.oracle});
  const KSResult ko = ks_one_sample(res.oracle, cdf);
  rep.metrics.push_back({"euler_oracle_ks_D", ko.statistic, 0.0, sanity_bound, 0.0, ko.statistic < sanity_bound, false});
  if (!x) {
    // gamma -> 0: the limit diffusion is the 3-d Bessel process
    const RngStream base = rng.split(98);
    auto b3 = detail::per_path<double>(ladder.paths, base, [&](RngStream& s) {
      return coth_diffusion_oracle(0.0, t, ladder.oracle_dt, s);
    });
    const KSResult kb = ks_one_sample(b3, [t](double y) { return drifted_bes3_cdf(y, 0.0, t); });
    rep.metrics.push_back(below_metric("bessel3_sanity_ks_D", kb.statistic, sanity_bound));
  }
  rep.notes.push_back("fixed-time marginals only; the limit theorem gives no rate");
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// Spectra of full-matrix simulations against their eigenvalue SDEs at time t.
struct EigConsistencyOptions {
  double t = 1.0;
  double mu_q = 3.0;
  double mu_x = 3.0;
  double mu_z = 1.5;
  std::vector<int> betas{1, 2};
  bool include_x = true;
  bool include_z = true;
  KappaTable::Options kappa;
};

namespace detail {

inline std::vector<double> spectrum_features(const RVec& v) {
  std::vector<double> f;
  for (int i = 0; i < v.size(); ++i) f.push_back(v[i]);
  for (int i = 0; i < v.size(); ++i) f.push_back(std::log(std::max(v[i], 1e-300)));
  return f;
}

inline std::vector<std::string> spectrum_names(int r, const std::string& sym) {
  std::vector<std::string> n;
  for (int i = 0; i < r; ++i) n.push_back(sym + std::to_string(i + 1));
  for (int i = 0; i < r; ++i) n.push_back("log_" + sym + std::to_string(i + 1));
  return n;
}

}  // namespace detail

inline VerificationReport eig_consistency_test(int r, std::size_t paths, const EigConsistencyOptions& eo,
                                               const TestOptions& opt, RngStream& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  VerificationReport rep;
  rep.identity = "eig-consistency";
  rep.seed = rng.seed();
  rep.alpha = opt.alpha;
  RngStream perm = rng.split(9);
  using Feat = std::vector<double>;
  FlowParams p;
  p.dim = r;
  p.dt = opt.dt;
  p.horizon = eo.t;
  EigParams ep;
  ep.dim = r;
  ep.dt = opt.dt;
  ep.horizon = eo.t;

  // P = Q^{-1} from Q_0 = I, real and complex
  for (int beta : eo.betas) {
    FlowParams pq = p;
    pq.mu = eo.mu_q;
    pq.beta = beta;
    auto full = detail::per_path<Feat>(paths, rng.split(10 + beta), [&](RngStream& s) {
      RVec ev;
      if (beta == 1) {
        auto q = evolve_Q<double>(RMat(identity<double>(r)), pq, s);
        ev = eigenvalues<double>(q.at(q.size() - 1));
      } else {
        using C = std::complex<double>;
        auto q = evolve_Q<C>(Mat<C>(identity<C>(r)), pq, s);
        ev = eigenvalues<C>(q.at(q.size() - 1));
      }
      return detail::spectrum_features(ev.cwiseInverse().reverse());
    });
    EigParams e = ep;
    e.mu = eo.mu_q;
    e.beta = beta;
    e.initial.assign(r, 1.0);
    auto sde = detail::per_path<Feat>(paths, rng.split(20 + beta), [&](RngStream& s) {
      return detail::spectrum_features(evolve_P_eigs(e, s).back());
    });
    rep.tests.push_back(compare_features("P eigenvalues beta=" + std::to_string(beta), detail::spectrum_names(r, "p"),
                                         full, sde, opt, perm));
  }

  // X from 0
  if (eo.include_x) {
    FlowParams px = p;
    px.mu = eo.mu_x;
    auto full = detail::per_path<Feat>(paths, rng.split(31), [&](RngStream& s) {
      auto [m, xp] = evolve_X<double>(px, s);
      return detail::spectrum_features(eigenvalues<double>(xp.at(xp.size() - 1)));
    });
    EigParams e = ep;
    e.mu = eo.mu_x;
    e.initial.assign(r, 0.0);
    auto sde = detail::per_path<Feat>(paths, rng.split(32), [&](RngStream& s) {
      return detail::spectrum_features(evolve_X_eigs(e, s).back());
    });
    rep.tests.push_back(compare_features("X eigenvalues", detail::spectrum_names(r, "x"), full, sde, opt, perm));
  }

  // Z from construct_Z against the singular-value SDE with tabulated kappa
  if (eo.include_z) {
    FlowParams pz = p;
    pz.mu = eo.mu_z;
    const std::vector<std::size_t> steps{static_cast<std::size_t>(std::lround(eo.t / p.dt))};
    auto full = detail::per_path<Feat>(paths, rng.split(41), [&](RngStream& s) {
      auto o = detail::observe_M(pz, eo.mu_z, steps, false, s);
      return detail::spectrum_features(singular_values<double>(RMat(o.m[0].partialPivLu().solve(o.a[0]))));
    });
    RngStream ks = rng.split(42);
    const KappaTable table = KappaTable::build(r, eo.mu_z, eo.kappa, ks);
    KappaFn kappa = [&table](const RVec& lam) { return table(lam); };
    EigParams e = ep;
    e.mu = eo.mu_z;
    e.initial.assign(r, 0.0);
    auto sde = detail::per_path<Feat>(paths, rng.split(43), [&](RngStream& s) {
      return detail::spectrum_features(evolve_Z_singvals(e, kappa, s).back());
    });
    rep.tests.push_back(compare_features("Z singular values", detail::spectrum_names(r, "z"), full, sde, opt, perm));
  }
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// E tr Q_t stays at r/(2 mu - r - 1) when Q_0 is inverse Wishart(2 mu).
inline VerificationReport stationarity_q_test(int r, double mu, const std::vector<double>& times, std::size_t paths,
                                              const TestOptions& opt, RngStream& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!(2.0 * mu > r + 1)) throw PreconditionError("finite stationary mean needs 2 mu > r + 1");
  FlowParams p;
  p.dim = r;
  p.mu = mu;
  p.dt = opt.dt;
  p.horizon = *std::max_element(times.begin(), times.end());
  p.validate();
  const auto steps = detail::step_indices(times, p.dt);
  WishartSpec<double> ws{r, 2.0 * mu, std::nullopt};
  auto tr = detail::per_path<std::vector<double>>(paths, rng.split(1), [&](RngStream& s) {
    RngStream init = s.split(0);
    auto q = evolve_Q<double>(sample_inv_wishart(ws, init), p, s);
    std::vector<double> out{q.at(0).trace()};
    for (std::size_t k : steps) out.push_back(q.at(k).trace());
    return out;
  });
  VerificationReport rep;
  rep.identity = "stationarity-q";
  rep.seed = rng.seed();
  rep.alpha = opt.alpha;
  const double target = r / (2.0 * mu - r - 1.0);
  std::vector<double> all{0.0};
  all.insert(all.end(), times.begin(), times.end());
  for (std::size_t j = 0; j < all.size(); ++j) {
    std::vector<double> v(paths);
    for (std::size_t k = 0; k < paths; ++k) v[k] = tr[k][j];
    const MeanSE m = mean_se(v);
    rep.metrics.push_back(abs_metric("mean_tr_Q_t=" + detail::time_label(all[j]), m.mean, m.std_error, target,
                                     opt.mean_tol * target));
  }
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// Residual of the Bessel PDE for U at r = 1 (quadrature) and r >= 2 (Monte
// Carlo with common random numbers).
inline VerificationReport bessel_pde_test(double mu1, const std::vector<double>& ys, int r, double mu, std::size_t budget,
                                          RngStream& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  VerificationReport rep;
  rep.identity = "bessel-pde";
  rep.seed = rng.seed();
  for (double y : ys) {
    RMat m(1, 1);
    m(0, 0) = y;
    RngStream s = rng.split(1);
    const PdeResidual res = pde_residual_U(m, mu1, 0.0, 0, s);
    rep.metrics.push_back(below_metric("residual_r=1_y=" + detail::time_label(y), res.residual, 1e-4));
  }
  rep.metrics.push_back(abs_metric("U_r=1_near_zero", bessel_U_scalar(1e-10, mu1), 0.0, 1.0, 1e-4));
  if (r >= 2) {
    RngStream s = rng.split(2);
    const PdeResidual res = pde_residual_U(identity<double>(r), mu, 0.0, budget, s);
    Metric m = below_metric("residual_r=" + std::to_string(r) + "_Y=I", res.residual, 5e-2);
    m.std_error = res.std_error;
    rep.metrics.push_back(m);
  }
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// Residual c3 + (2 mu - r - 1) c2 - c1 over random indices.
inline VerificationReport mellin_test(std::size_t count, int max_dim, RngStream& rng) {
  const auto t0 = std::chrono::steady_clock::now();
  VerificationReport rep;
  rep.identity = "mellin";
  rep.seed = rng.seed();
  double worst = 0.0;
  for (std::size_t k = 0; k < count; ++k) {
    MellinIndex idx;
    idx.dim = 1 + static_cast<int>(rng.uniform() * max_dim);
    idx.mu = 6.0 * rng.uniform() - 3.0;
    for (int i = 0; i < idx.dim; ++i) idx.s.push_back(6.0 * rng.uniform() - 3.0);
    worst = std::max(worst, std::abs(mellin_multipliers(idx).residual));
  }
  rep.metrics.push_back(below_metric("max_abs_residual", worst, 1e-12));
  rep.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace gldiff
