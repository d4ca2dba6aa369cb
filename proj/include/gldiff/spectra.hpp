#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "errors.hpp"
#include "flows.hpp"
#include "matcore.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace gldiff {

struct EigParams {
  int dim = 2;
  double mu = 1.0;
  int beta = 1;
  double horizon = 1.0;
  double dt = 1e-3;
  std::vector<double> initial;  // ascending, non-negative

  int steps() const { return static_cast<int>(std::lround(horizon / dt)); }
  void validate() const {
    if (dim < 1) throw PreconditionError("dim must be positive");
    if (!(dt > 0.0) || !(horizon >= dt)) throw PreconditionError("invalid time grid");
    if (beta != 1 && beta != 2 && beta != 4) throw PreconditionError("beta must be 1, 2 or 4");
    if (static_cast<int>(initial.size()) != dim) throw PreconditionError("initial spectrum has wrong length");
    for (std::size_t i = 0; i < initial.size(); ++i) {
      if (initial[i] < 0.0) throw PreconditionError("initial spectrum must be non-negative");
      if (i && initial[i] < initial[i - 1]) throw PreconditionError("initial spectrum must be ascending");
    }
  }
};

struct SpectrumPath {
  int dim = 1;
  double dt = 0.0;
  std::vector<double> grid;
  std::vector<double> values;  // ascending per grid point
  std::size_t collisions = 0;
  std::size_t halvings = 0;

  std::size_t size() const { return grid.size(); }
  RVec at(std::size_t k) const { return Eigen::Map<const Eigen::VectorXd>(values.data() + k * dim, dim); }
  RVec back() const { return at(size() - 1); }
  std::size_t index_at(double t) const {
    auto it = std::lower_bound(grid.begin(), grid.end(), t - 0.5 * dt);
    if (it == grid.end()) throw DomainError("time outside spectrum grid");
    return static_cast<std::size_t>(it - grid.begin());
  }
};

inline constexpr double kCollisionRel = 1e-8;

inline double clamped_gap(double a, double b) {
  const double d = a - b, floor = kCollisionRel * (std::abs(a) + std::abs(b));
  if (std::abs(d) >= floor) return d;
  return d >= 0 ? std::max(floor, 1e-300) : -std::max(floor, 1e-300);
}

// Common eigenvalue drift of P = Q^{-1} for beta in {1, 2, 4}.
inline RVec p_eig_drift(const RVec& p, double mu, double beta) {
  const int r = static_cast<int>(p.size());
  RVec d(r);
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < r; ++j)
      if (j != i) s += (p[i] + p[j]) / clamped_gap(p[i], p[j]);
    d[i] = -p[i] * p[i] + (2.0 * mu + 2.0 / beta) * p[i] + p[i] * s;
  }
  return d;
}

// The real-case form written directly: -p^2 + (2 mu + 2) p + repulsion.
inline RVec wishart_eig_drift(const RVec& p, double mu) {
  const int r = static_cast<int>(p.size());
  RVec d(r);
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < r; ++j)
      if (j != i) s += (p[i] + p[j]) / clamped_gap(p[i], p[j]);
    d[i] = -p[i] * p[i] + (2.0 * mu + 2.0) * p[i] + p[i] * s;
  }
  return d;
}

// Eigenvalues of X = P^{-1}; at beta = 1: 1 + (2 - 2 mu) x + x sum (x_i + x_j)/(x_i - x_j).
inline RVec x_eig_drift(const RVec& x, double mu, double beta) {
  const int r = static_cast<int>(x.size());
  RVec d(r);
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < r; ++j)
      if (j != i) s += (x[i] + x[j]) / clamped_gap(x[i], x[j]);
    d[i] = 1.0 + (2.0 / beta - 2.0 * mu) * x[i] + x[i] * s;
  }
  return d;
}

// Singular values of Z; kdiag holds the diagonal of kappa_mu(Lambda_z, I).
inline RVec z_sv_drift(const RVec& z, double mu, const RVec& kdiag) {
  const int r = static_cast<int>(z.size());
  RVec d(r);
  for (int i = 0; i < r; ++i) {
    double s = 0.0;
    for (int j = 0; j < r; ++j)
      if (j != i) s += z[j] * z[j] / clamped_gap(z[i] * z[i], z[j] * z[j]);
    d[i] = (0.5 * r - mu) * z[i] + kdiag[i] / z[i] + z[i] * s;
  }
  return d;
}

using DriftFn = std::function<RVec(const RVec&)>;

namespace detail {

inline bool admissible(const RVec& x) {
  for (int i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || x[i] < 0.0) return false;
    if (i && x[i] - x[i - 1] < kCollisionRel * (x[i] + x[i - 1])) return false;
  }
  return true;
}

// Steps may not change any gap by more than half of it, so the 1/gap
// repulsion is resolved rather than overshot.
inline bool gaps_resolved(const RVec& x, const RVec& next) {
  for (int i = 1; i < x.size(); ++i) {
    const double g = x[i] - x[i - 1];
    if (std::abs((next[i] - next[i - 1]) - g) > 0.5 * g) return false;
  }
  return true;
}

inline bool near_collision(const RVec& x) {
  for (int i = 1; i < x.size(); ++i)
    if (x[i] - x[i - 1] < kCollisionRel * (x[i] + x[i - 1])) return true;
  return false;
}

// Euler step dx_i = drift_i dt + sigma x_i db_i with local halving by Brownian
// bridge refinement whenever the step would leave the ordered chamber or
// move a gap by more than half its size. `budget` caps the halvings spent on
// one outer step.
inline void advance(RVec& x, double h, const RVec& db, const DriftFn& drift, double sigma, RngStream& rng,
                    SpectrumPath& out, int depth, int& budget) {
  RVec next = x + drift(x) * h + sigma * x.cwiseProduct(db);
  const bool ok = admissible(next);
  if (ok && gaps_resolved(x, next)) {
    x = next;
    return;
  }
  if (depth < 30 && budget > 0) {
    --budget;
    ++out.halvings;
    RVec db1(db.size());
    const double s = 0.5 * std::sqrt(h);
    for (int i = 0; i < db.size(); ++i) db1[i] = 0.5 * db[i] + s * rng.normal();
    RVec db2 = db - db1;
    advance(x, 0.5 * h, db1, drift, sigma, rng, out, depth + 1, budget);
    advance(x, 0.5 * h, db2, drift, sigma, rng, out, depth + 1, budget);
    return;
  }
  if (ok) {
    x = next;
    return;
  }
  // refinement exhausted: restore order and separation
  ++out.collisions;
  std::sort(next.data(), next.data() + next.size());
  for (int i = 0; i < next.size(); ++i) {
    if (!std::isfinite(next[i])) next[i] = x[i];
    next[i] = std::max(next[i], 0.0);
    if (i) next[i] = std::max(next[i], next[i - 1] * (1.0 + 2.0 * kCollisionRel) + 1e-300);
  }
  x = next;
}

}  // namespace detail

inline SpectrumPath integrate_spectrum(const EigParams& p, const DriftFn& drift, double sigma, RngStream& rng) {
  p.validate();
  SpectrumPath out;
  out.dim = p.dim;
  out.dt = p.dt;
  RVec x = Eigen::Map<const Eigen::VectorXd>(p.initial.data(), p.dim);
  // entrance from coinciding points
  bool tie = false;
  for (int i = 1; i < p.dim; ++i) tie = tie || x[i] <= x[i - 1];
  if (tie)
    for (int i = 0; i < p.dim; ++i) x[i] += i * 1e-10;
  const int n = p.steps();
  out.grid.reserve(n + 1);
  out.values.reserve((n + 1) * p.dim);
  auto push = [&](double t) {
    out.grid.push_back(t);
    for (int i = 0; i < p.dim; ++i) out.values.push_back(x[i]);
  };
  push(0.0);
  const double sd = std::sqrt(p.dt);
  RVec db(p.dim);
  for (int k = 0; k < n; ++k) {
    if (detail::near_collision(x)) ++out.collisions;
    for (int i = 0; i < p.dim; ++i) db[i] = sd * rng.normal();
    int budget = 4096;
    detail::advance(x, p.dt, db, drift, sigma, rng, out, 0, budget);
    push((k + 1) * p.dt);
  }
  if (n > 0 && out.collisions > static_cast<std::size_t>(n) / 20)
    throw CollisionOverflow("collision guard triggered on more than 5% of steps");
  return out;
}

inline SpectrumPath evolve_P_eigs(const EigParams& p, RngStream& rng) {
  const double mu = p.mu, beta = p.beta;
  return integrate_spectrum(p, [=](const RVec& x) { return p_eig_drift(x, mu, beta); }, 2.0 / std::sqrt(beta), rng);
}

inline SpectrumPath evolve_X_eigs(const EigParams& p, RngStream& rng) {
  const double mu = p.mu, beta = p.beta;
  return integrate_spectrum(p, [=](const RVec& x) { return x_eig_drift(x, mu, beta); }, 2.0 / std::sqrt(beta), rng);
}

// kappa(lambda) returns the diagonal of kappa_mu(diag(lambda), I).
using KappaFn = std::function<RVec(const RVec&)>;

inline SpectrumPath evolve_Z_singvals(const EigParams& p, const KappaFn& kappa, RngStream& rng) {
  if (p.beta != 1) throw PreconditionError("singular-value SDE is implemented for beta = 1");
  if (!(std::abs(p.mu) > 0.5 * (p.dim - 1))) throw PreconditionError("requires |mu| > (r - 1)/2");
  EigParams q = p;
  // start strictly inside the chamber: z = 0 is an entrance boundary
  for (int i = 0; i < q.dim; ++i) q.initial[i] = std::max(q.initial[i], 1e-6 * (1.0 + i));
  const double mu = p.mu;
  auto drift = [=](const RVec& z) {
    RVec lam = z.cwiseProduct(z).cwiseInverse();
    return z_sv_drift(z, mu, kappa(lam));
  };
  return integrate_spectrum(q, drift, 1.0, rng);
}

// Growth rates of the singular values, ascending, from the accumulated QR of
// the step factors between burn_in and the end of the path.
template <class S>
RVec lyapunov_exponents(const MatrixPath<S>& path, double burn_in) {
  const std::size_t k0 = path.index_at(burn_in);
  const double span = path.grid.back() - path.grid[k0];
  if (span < 10.0 - 1e-9) throw PreconditionError("need at least 10 time units after burn-in");
  const int r = path.dim;
  const bool from_noise = path.params && path.has_increments();
  Eigen::HouseholderQR<Mat<S>> qr0(Mat<S>(path.at(k0).adjoint()));
  Mat<S> q = qr0.householderQ() * identity<S>(r);
  RVec acc = RVec::Zero(r);
  for (std::size_t k = k0; k + 1 < path.size(); ++k) {
    Mat<S> e = from_noise ? increment_factor<S>(*path.params, path.increment(k), path.params->signed_mu(), path.dt)
                          : Mat<S>(path.at(k).partialPivLu().solve(path.at(k + 1)));
    Eigen::HouseholderQR<Mat<S>> qr(Mat<S>(e.adjoint() * q));
    q = qr.householderQ() * identity<S>(r);
    for (int i = 0; i < r; ++i) acc[i] += std::log(std::abs(qr.matrixQR()(i, i)));
  }
  acc /= span;
  std::sort(acc.data(), acc.data() + r);
  return acc;
}

enum class ScalingTarget { x_top, z_bottom };

struct ScalingLadder {
  double gamma = 1.0;
  std::vector<double> cs{2.0, 4.0, 8.0};
  double t = 1.0;
  int dim = 2;
  ScalingTarget target = ScalingTarget::x_top;
  std::size_t paths = 5000;
  double dt_max = 0.01;     // cap on the original-time step
  int min_steps = 400;       // at least this many steps per c
  double oracle_dt = 1e-3;   // step of the limit-SDE simulation

  double dt_for(double c) const { return std::min(dt_max, c * c * t / min_steps); }
  void validate() const {
    if (!(gamma > 0.0)) throw PreconditionError("gamma must be positive");
    if (cs.empty()) throw PreconditionError("empty c ladder");
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (cs[i] < 1.0) throw PreconditionError("c must be at least 1");
      if (i && cs[i] <= cs[i - 1]) throw PreconditionError("c ladder must be ascending");
    }
  }
};

struct ScalingRung {
  double c = 0.0;
  double dt = 0.0;
  std::vector<double> samples;  // scaled top (X) or bottom (Z) log value
  std::vector<double> lower;    // scaled log of the next X eigenvalue (X target only)
};

struct ScalingResult {
  ScalingTarget target;
  double gamma = 0.0, t = 0.0;
  std::vector<ScalingRung> rungs;
  std::vector<double> oracle;  // Euler simulation of the limit diffusion
};

// CDF at time t of Brownian motion with drift -gamma reflected at 0, started at 0.
inline double reflected_bm_cdf(double y, double gamma, double t) {
  if (y <= 0.0) return 0.0;
  auto phi = [](double u) { return 0.5 * std::erfc(-u / std::sqrt(2.0)); };
  const double st = std::sqrt(t);
  return phi((y + gamma * t) / st) - std::exp(-2.0 * gamma * y) * phi((-y + gamma * t) / st);
}

// CDF at time t of |W_t + gamma t e| for 3-d Brownian motion W (the diffusion
// 1/2 d^2 + gamma coth(gamma r) d started at 0).
inline double drifted_bes3_cdf(double y, double gamma, double t) {
  if (y <= 0.0) return 0.0;
  auto phi = [](double u) { return 0.5 * std::erfc(-u / std::sqrt(2.0)); };
  const double st = std::sqrt(t);
  if (gamma * y < 1e-8) {
    // gamma -> 0 limit: chi distribution with 3 degrees of freedom
    const double u = y / st;
    return std::erf(u / std::sqrt(2.0)) - std::sqrt(2.0 / M_PI) * u * std::exp(-0.5 * u * u);
  }
  const double a = gamma * t;
  const double lo = (y - a) / st, hi = (y + a) / st;
  return phi(lo) - phi(-a / st) + phi(hi) - phi(a / st) +
         st / (a * std::sqrt(2.0 * M_PI)) * (std::exp(-0.5 * hi * hi) - std::exp(-0.5 * lo * lo));
}

inline double reflected_bm_oracle(double gamma, double t, double h, RngStream& rng) {
  const int n = static_cast<int>(std::lround(t / h));
  double y = 0.0;
  for (int k = 0; k < n; ++k) {
    const double dx = std::sqrt(h) * rng.normal() - gamma * h;
    const double u = rng.uniform();
    y = std::max(y + dx, 0.5 * (dx + std::sqrt(dx * dx - 2.0 * h * std::log(u))));
  }
  return y;
}

// Euler scheme for d r = gamma coth(gamma r) dt + dW with reflection at 0;
// gamma = 0 gives the 3-d Bessel process. The first step is exact.
inline double coth_diffusion_oracle(double gamma, double t, double h, RngStream& rng) {
  const int n = static_cast<int>(std::lround(t / h));
  const double sh = std::sqrt(h);
  const double g0 = sh * rng.normal() + gamma * h, g1 = sh * rng.normal(), g2 = sh * rng.normal();
  double r = std::sqrt(g0 * g0 + g1 * g1 + g2 * g2);
  for (int k = 1; k < n; ++k) {
    const double drift = gamma > 0.0 ? gamma / std::tanh(gamma * r) : 1.0 / r;
    r = std::abs(r + drift * h + sh * rng.normal());
  }
  return r;
}

// Scaled top log-eigenvalue of X and next one, at time c^2 t, from M^{(+mu)}.
inline std::pair<double, double> scaled_x_sample(int r, double mu, double c, double t, double dt, RngStream& rng) {
  FlowParams p;
  p.dim = r;
  p.mu = mu;
  p.dt = dt;
  const int n = static_cast<int>(std::lround(c * c * t / dt));
  const NoiseSpec ns = p.noise();
  RMat x = RMat::Zero(r, r);
  for (int k = 0; k < n; ++k) {
    RMat e = increment_factor<double>(p, bm_increment<double>(ns, dt, rng), mu, dt);
    x = x_recursion_step<double>(x, e, dt);
  }
  RVec ev = eigenvalues<double>(x);
  const double top = ev[r - 1];
  const double next = r > 1 ? std::max(ev[r - 2], 1e-300) : top;
  return {std::log(top) / (2.0 * c), std::log(next) / (2.0 * c)};
}

// Scaled bottom log-singular value of Z at time c^2 t. Z's law is unchanged
// under mu -> -mu; with M^{(-mu)}, z_min = 1 / s_max(A_t^{-1} M_t), which keeps
// full relative precision.
inline double scaled_z_sample(int r, double mu, double c, double t, double dt, RngStream& rng) {
  FlowParams p;
  p.dim = r;
  p.mu = mu;
  p.dt = dt;
  const int n = static_cast<int>(std::lround(c * c * t / dt));
  const NoiseSpec ns = p.noise();
  RMat m = identity<double>(r), a = RMat::Zero(r, r), prev = identity<double>(r);
  for (int k = 0; k < n; ++k) {
    RMat e = increment_factor<double>(p, bm_increment<double>(ns, dt, rng), -mu, dt);
    m = m * e;
    RMat y = m * m.transpose();
    a += 0.5 * dt * (prev + y);
    prev = y;
  }
  RMat w = hermitian_part(a).llt().solve(m);
  const double smax = singular_values<double>(w)[r - 1];
  return -std::log(smax) / c;
}

inline ScalingResult scaled_limit_experiment(const ScalingLadder& ladder, RngStream& rng) {
  ladder.validate();
  ScalingResult res;
  res.target = ladder.target;
  res.gamma = ladder.gamma;
  res.t = ladder.t;
  const double base_mu = 0.5 * (ladder.dim - 1);
  for (std::size_t ci = 0; ci < ladder.cs.size(); ++ci) {
    const double c = ladder.cs[ci];
    ScalingRung rung;
    rung.c = c;
    rung.dt = ladder.dt_for(c);
    rung.samples.resize(ladder.paths);
    if (ladder.target == ScalingTarget::x_top) rung.lower.resize(ladder.paths);
    const double mu = base_mu + ladder.gamma / c;
    const RngStream base = rng.split(100 + ci);
    parallel_for(ladder.paths, [&](std::size_t i) {
      RngStream s(base.seed(), i);
      if (ladder.target == ScalingTarget::x_top) {
        auto [top, next] = scaled_x_sample(ladder.dim, mu, c, ladder.t, rung.dt, s);
        rung.samples[i] = top;
        rung.lower[i] = next;
      } else {
        rung.samples[i] = scaled_z_sample(ladder.dim, mu, c, ladder.t, rung.dt, s);
      }
    });
    res.rungs.push_back(std::move(rung));
  }
  res.oracle.resize(ladder.paths);
  const RngStream ob = rng.split(99);
  parallel_for(ladder.paths, [&](std::size_t i) {
    RngStream s(ob.seed(), i);
    res.oracle[i] = ladder.target == ScalingTarget::x_top
                        ? reflected_bm_oracle(ladder.gamma, ladder.t, ladder.oracle_dt, s)
                        : coth_diffusion_oracle(ladder.gamma, ladder.t, ladder.oracle_dt, s);
  });
  return res;
}

}  // namespace gldiff
