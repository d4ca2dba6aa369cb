#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "matcore.hpp"
#include "rng.hpp"

namespace gldiff {

enum class DriftSign { plus, minus };
enum class Scheme { euler, exponential };

struct FlowParams {
  int dim = 2;
  double mu = 1.0;
  DriftSign drift_sign = DriftSign::plus;
  int beta = 1;
  NoiseStructure structure = NoiseStructure::isotropic;
  double horizon = 1.0;
  double dt = 1e-3;
  Scheme scheme = Scheme::exponential;
  // stopping rule for integrals over an infinite horizon
  double tail_tol = 1e-4;
  double horizon_max = 400.0;

  double signed_mu() const { return drift_sign == DriftSign::plus ? mu : -mu; }
  NoiseSpec noise() const { return {dim, beta, structure}; }
  int steps() const { return static_cast<int>(std::lround(horizon / dt)); }
  bool convergent() const { return 2.0 * mu > dim - 1; }

  void validate() const {
    if (dim < 1 || dim > kMaxDim) throw PreconditionError("dim must lie in [1, 16]");
    if (!(dt > 0.0)) throw PreconditionError("dt must be positive");
    if (!(horizon >= dt)) throw PreconditionError("horizon must be at least dt");
    if (beta != 1 && beta != 2) throw PreconditionError("matrix flows support beta in {1, 2}");
    if (!(tail_tol > 0.0)) throw PreconditionError("tail_tol must be positive");
  }
  void require_convergent() const {
    if (!convergent()) throw PreconditionError("requires 2 mu > r - 1");
  }
};

// Uniform-grid trajectory of an r x r matrix, stored row-major per grid point.
// `increments[k]` is the driving noise over [t_k, t_{k+1}] when known.
template <class S>
struct MatrixPath {
  int dim = 1;
  double dt = 0.0;
  std::size_t zero_index = 0;
  std::vector<double> grid;
  std::vector<S> values;
  std::vector<S> increments;
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;
  // generating law, when the path came from an M-type simulation
  std::optional<FlowParams> params;

  std::size_t size() const { return grid.size(); }
  std::size_t block() const { return static_cast<std::size_t>(dim) * dim; }
  Mat<S> at(std::size_t k) const { return load(values.data() + k * block(), dim); }
  Mat<S> increment(std::size_t k) const { return load(increments.data() + k * block(), dim); }
  bool has_increments() const { return !increments.empty(); }
  void push(double t, const Mat<S>& m) {
    grid.push_back(t);
    values.resize(values.size() + block());
    store(m, values.data() + values.size() - block());
  }
  std::size_t index_at(double t) const {
    auto it = std::lower_bound(grid.begin(), grid.end(), t - 0.5 * dt);
    if (it == grid.end()) throw DomainError("time outside path grid");
    return static_cast<std::size_t>(it - grid.begin());
  }
  Mat<S> at_time(double t) const { return at(index_at(t)); }
};

// Path of Hermitian positive (semi)definite matrices, e.g. running integrals.
template <class S>
struct SPDPath : MatrixPath<S> {
  SPDMatrix<S> spd_at(std::size_t k) const { return SPDMatrix<S>(this->at(k)); }
  std::size_t projections = 0;
};

// One step of the group increment M_t^{-1} M_{t+h}.
template <class S>
Mat<S> increment_factor(const FlowParams& p, const Mat<S>& db, double drift, double h) {
  const int r = p.dim;
  if (p.scheme == Scheme::exponential) {
    Mat<S> a = db;
    a.diagonal().array() += S(drift * h);
    return expm(a);
  }
  Mat<S> e = identity<S>(r) + db;
  e.diagonal().array() += S((ito_correction(p.noise()) + drift) * h);
  return e;
}

template <class S>
std::vector<S> draw_noise(const NoiseSpec& ns, std::size_t steps, double h, RngStream& rng) {
  const std::size_t b = static_cast<std::size_t>(ns.dim) * ns.dim;
  std::vector<S> out(steps * b);
  for (std::size_t k = 0; k < steps; ++k) store(bm_increment<S>(ns, h, rng), out.data() + k * b);
  return out;
}

// Sum consecutive pairs of increments: the same Brownian path on a grid of 2h.
template <class S>
std::vector<S> coarsen_noise(const std::vector<S>& fine, int dim) {
  const std::size_t b = static_cast<std::size_t>(dim) * dim;
  const std::size_t n = fine.size() / b / 2;
  std::vector<S> out(n * b);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < b; ++j) out[k * b + j] = fine[2 * k * b + j] + fine[(2 * k + 1) * b + j];
  return out;
}

inline void check_invertible_step(double det_abs, std::size_t k) {
  if (!(det_abs > 1e-300) || !std::isfinite(det_abs))
    throw SingularStep("determinant underflow at step " + std::to_string(k) + "; reduce dt");
}

// M path driven by the given noise increments.
template <class S>
MatrixPath<S> evolve_M_driven(const FlowParams& p, const std::vector<S>& noise) {
  p.validate();
  MatrixPath<S> path;
  path.dim = p.dim;
  path.dt = p.dt;
  const std::size_t b = path.block();
  const std::size_t n = noise.size() / b;
  path.grid.reserve(n + 1);
  path.values.reserve((n + 1) * b);
  Mat<S> m = identity<S>(p.dim);
  path.push(0.0, m);
  for (std::size_t k = 0; k < n; ++k) {
    const Mat<S> e = increment_factor<S>(p, load(noise.data() + k * b, p.dim), p.signed_mu(), p.dt);
    m = m * e;
    if (p.scheme == Scheme::euler) check_invertible_step(std::abs(m.determinant()), k);
    path.push((k + 1) * p.dt, m);
  }
  path.increments = noise;
  path.params = p;
  return path;
}

template <class S>
MatrixPath<S> evolve_M(const FlowParams& p, RngStream& rng) {
  p.validate();
  auto noise = draw_noise<S>(p.noise(), p.steps(), p.dt, rng);
  auto path = evolve_M_driven<S>(p, noise);
  path.seed = rng.seed();
  path.stream_id = rng.stream_id();
  return path;
}

// Extends M to [-T_neg, T]: M_{t-h} = M_t E^{-1} with a fresh increment E.
template <class S>
MatrixPath<S> extend_two_sided(const FlowParams& p, double t_neg, RngStream& rng) {
  if (!(t_neg > 0.0)) throw PreconditionError("T_neg must be positive");
  auto fwd = evolve_M<S>(p, rng);
  const std::size_t nneg = static_cast<std::size_t>(std::lround(t_neg / p.dt));
  const std::size_t b = fwd.block();
  auto neg_noise = draw_noise<S>(p.noise(), nneg, p.dt, rng);
  // backward values: index j corresponds to time -j h
  std::vector<Mat<S>> back;
  back.reserve(nneg);
  Mat<S> m = identity<S>(p.dim);
  for (std::size_t j = 0; j < nneg; ++j) {
    const Mat<S> e = increment_factor<S>(p, load(neg_noise.data() + j * b, p.dim), p.signed_mu(), p.dt);
    m = m * e.inverse();
    if (p.scheme == Scheme::euler) check_invertible_step(std::abs(m.determinant()), j);
    back.push_back(m);
  }
  MatrixPath<S> out;
  out.dim = p.dim;
  out.dt = p.dt;
  out.seed = fwd.seed;
  out.stream_id = fwd.stream_id;
  for (std::size_t j = nneg; j-- > 0;) out.push(-double(j + 1) * p.dt, back[j]);
  out.zero_index = nneg;
  out.grid.insert(out.grid.end(), fwd.grid.begin(), fwd.grid.end());
  out.values.insert(out.values.end(), fwd.values.begin(), fwd.values.end());
  // increments in grid order: [-(j+1)h, -jh] carries neg_noise[j]
  for (std::size_t j = nneg; j-- > 0;)
    out.increments.insert(out.increments.end(), neg_noise.begin() + j * b, neg_noise.begin() + (j + 1) * b);
  out.increments.insert(out.increments.end(), fwd.increments.begin(), fwd.increments.end());
  out.params = p;
  return out;
}

// N_t = M_{-t}. For the exponential scheme the increment of N over a step
// is driven by minus the original noise, so reversal is an exact involution.
template <class S>
MatrixPath<S> time_reverse(const MatrixPath<S>& path) {
  MatrixPath<S> out;
  out.dim = path.dim;
  out.dt = path.dt;
  out.seed = path.seed;
  out.stream_id = path.stream_id;
  const std::size_t n = path.size(), b = path.block();
  out.grid.resize(n);
  out.values.resize(n * b);
  for (std::size_t k = 0; k < n; ++k) {
    out.grid[k] = -path.grid[n - 1 - k];
    std::copy_n(path.values.begin() + (n - 1 - k) * b, b, out.values.begin() + k * b);
  }
  out.zero_index = n - 1 - path.zero_index;
  if (path.has_increments()) {
    out.increments.resize((n - 1) * b);
    for (std::size_t k = 0; k + 1 < n; ++k)
      for (std::size_t j = 0; j < b; ++j) out.increments[k * b + j] = -path.increments[(n - 2 - k) * b + j];
  }
  if (path.params) {
    out.params = *path.params;
    out.params->drift_sign = path.params->drift_sign == DriftSign::plus ? DriftSign::minus : DriftSign::plus;
  }
  return out;
}

// A_t = int_0^t M M^T ds by the trapezoid rule from the zero index onward.
template <class S>
SPDPath<S> accumulate_A(const MatrixPath<S>& path) {
  SPDPath<S> out;
  out.dim = path.dim;
  out.dt = path.dt;
  out.seed = path.seed;
  out.stream_id = path.stream_id;
  const int r = path.dim;
  Mat<S> a = Mat<S>::Zero(r, r);
  Mat<S> prev = path.at(path.zero_index);
  prev = prev * prev.adjoint();
  out.push(path.grid[path.zero_index], a);
  for (std::size_t k = path.zero_index + 1; k < path.size(); ++k) {
    const double h = path.grid[k] - path.grid[k - 1];
    Mat<S> m = path.at(k);
    Mat<S> y = m * m.adjoint();
    a += 0.5 * h * (prev + y);
    a = hermitian_part(a);
    out.push(path.grid[k], a);
    prev = y;
  }
  return out;
}

// Log-rate of decay of |M|^2 for the convergent sign; `var` scales the noise.
inline double tail_decay_rate(const FlowParams& p, double drift, double var = 1.0) {
  return 2.0 * drift - var * p.beta * (p.dim - 1);
}

// Streams an M path with exponent drift -|drift| and returns
// int_0^infty M M^T ds, stopping once tr(M M^T)/rate < tail_tol * tr(A).
template <class S>
Mat<S> tail_integral(const FlowParams& p, double drift, double var, RngStream& rng, double* stop_time = nullptr) {
  const double rate = tail_decay_rate(p, drift, var);
  if (!(rate > 0.0)) throw PreconditionError("requires 2 mu > r - 1");
  const int r = p.dim;
  const NoiseSpec ns = p.noise();
  const double sv = std::sqrt(var);
  const std::size_t nmax = static_cast<std::size_t>(std::lround(p.horizon_max / p.dt));
  Mat<S> m = identity<S>(r), a = Mat<S>::Zero(r, r), prev = identity<S>(r);
  for (std::size_t k = 0; k < nmax; ++k) {
    Mat<S> db = bm_increment<S>(ns, p.dt, rng) * sv;
    Mat<S> e = increment_factor<S>(p, db, -drift, p.dt);
    m = m * e;
    Mat<S> y = m * m.adjoint();
    a += 0.5 * p.dt * (prev + y);
    prev = y;
    const double ty = trace_re(y);
    if (ty / rate < p.tail_tol * trace_re(a)) {
      if (stop_time) *stop_time = (k + 1) * p.dt;
      return hermitian_part(a);
    }
  }
  throw HorizonTooShort("tail not below tolerance by horizon_max");
}

template <class S>
SPDMatrix<S> sample_A_infinity(const FlowParams& p, RngStream& rng) {
  p.validate();
  p.require_convergent();
  return SPDMatrix<S>(tail_integral<S>(p, p.mu, 1.0, rng));
}

// SPD diffusions of the form
//   dQ = I dt + c Q dt + d diag(Q) dt + tr(Q) I dt - dB Q - Q dB^*
// with (c, d) fixed by the noise law and the drift mu of the underlying group
// motion (Q = N^{-1} int N N^* N^{-*} for N with exponent drift mu).
template <class S>
std::pair<double, double> spd_flow_coefficients(const NoiseSpec& ns, double mu) {
  if (ns.structure == NoiseStructure::structured) return {1.0 / ns.beta - 2.0 * mu, 1.0 / ns.beta - 1.0};
  return {2.0 / ns.beta - 1.0 - 2.0 * mu, 0.0};
}

// Symmetrize, and clamp eigenvalues at 1e-12 tr if the step left the cone.
template <class S>
bool project_to_cone(Mat<S>& q) {
  q = hermitian_part(q);
  Eigen::LLT<Mat<S>> llt(q);
  const double tol = 1e-12 * std::abs(trace_re(q));
  bool ok = llt.info() == Eigen::Success;
  if (ok) {
    Mat<S> l = llt.matrixL();
    for (int i = 0; i < q.rows(); ++i) ok = ok && std::norm(l(i, i)) > tol;
  }
  if (ok) return false;
  auto ed = sym_eigs<S>(q);
  const double floor = std::max(1e-12 * std::abs(ed.values.sum()), 1e-300);
  RVec lam = ed.values.cwiseMax(floor);
  q = ed.vectors * lam.template cast<S>().asDiagonal() * ed.vectors.adjoint();
  q = hermitian_part(q);
  return true;
}

template <class S>
Mat<S> spd_flow_step(const Mat<S>& q, const Mat<S>& db, double c, double d, double h) {
  Mat<S> dq = -db * q - q * db.adjoint();
  dq += (c * h) * q;
  if (d != 0.0) dq.diagonal() += (d * h) * q.diagonal();
  dq.diagonal().array() += S((1.0 + trace_re(q)) * h);
  return q + dq;
}

// Exact-in-the-scheme update of X = M^{-1} A M^{-*} across one step with
// increment factor e; avoids forming ill-conditioned M^{-1}.
template <class S>
Mat<S> x_recursion_step(const Mat<S>& x, const Mat<S>& e, double h) {
  const int r = static_cast<int>(x.rows());
  Mat<S> inner = x + 0.5 * h * (identity<S>(r) + e * e.adjoint());
  Eigen::PartialPivLU<Mat<S>> lu(e);
  Mat<S> t = lu.solve(inner);
  Mat<S> out = lu.solve(t.adjoint().eval());
  return hermitian_part(Mat<S>(out.adjoint()));
}

template <class S>
SPDPath<S> run_spd_flow(const Mat<S>& q0, const FlowParams& p, double mu, const std::vector<S>& noise) {
  auto [c, d] = spd_flow_coefficients<S>(p.noise(), mu);
  SPDPath<S> out;
  out.dim = p.dim;
  out.dt = p.dt;
  const std::size_t b = out.block();
  const std::size_t n = noise.size() / b;
  Mat<S> q = hermitian_part(q0);
  out.push(0.0, q);
  for (std::size_t k = 0; k < n; ++k) {
    const Mat<S> db = load(noise.data() + k * b, p.dim);
    if (p.scheme == Scheme::exponential) {
      // Q = N^{-1} (int N N^*) N^{-*} advanced through the group increment; stays in the cone
      q = x_recursion_step<S>(q, increment_factor<S>(p, db, mu, p.dt), p.dt);
    } else {
      q = spd_flow_step<S>(q, db, c, d, p.dt);
      if (project_to_cone<S>(q)) ++out.projections;
    }
    out.push((k + 1) * p.dt, q);
  }
  if (n > 0 && out.projections > n / 100) throw ConeExit("projection frequency above 1%; reduce dt");
  out.increments = noise;
  return out;
}

template <class S>
SPDPath<S> evolve_Q(const Mat<S>& q0, const FlowParams& p, RngStream& rng) {
  p.validate();
  p.require_convergent();
  auto noise = draw_noise<S>(p.noise(), p.steps(), p.dt, rng);
  return run_spd_flow<S>(q0, p, p.mu, noise);
}

template <class S>
SPDPath<S> evolve_Q(const SPDMatrix<S>& q0, const FlowParams& p, RngStream& rng) {
  return evolve_Q<S>(q0.matrix(), p, rng);
}

// X_t = M_t^{-1} A_t M_t^{-T}, integrated by its own SDE on the noise of M.
template <class S>
std::pair<MatrixPath<S>, SPDPath<S>> evolve_X(const FlowParams& p, RngStream& rng) {
  p.validate();
  auto noise = draw_noise<S>(p.noise(), p.steps(), p.dt, rng);
  auto m = evolve_M_driven<S>(p, noise);
  m.seed = rng.seed();
  m.stream_id = rng.stream_id();
  auto x = run_spd_flow<S>(Mat<S>::Zero(p.dim, p.dim), p, p.signed_mu(), noise);
  return {std::move(m), std::move(x)};
}

template <class S>
MatrixPath<S> construct_Z(const MatrixPath<S>& m, const SPDPath<S>& a) {
  MatrixPath<S> z;
  z.dim = m.dim;
  z.dt = m.dt;
  z.seed = m.seed;
  z.stream_id = m.stream_id;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const std::size_t km = m.zero_index + k;
    z.push(a.grid[k], Mat<S>(m.at(km).partialPivLu().solve(a.at(k))));
  }
  return z;
}

// N_t = A_inf (A_inf - A_t)^{-1} M_t along an M path of negative drift.
template <class S>
MatrixPath<S> enlargement_N(const MatrixPath<S>& m, const SPDMatrix<S>& a_inf) {
  auto a = accumulate_A(m);
  MatrixPath<S> n;
  n.dim = m.dim;
  n.dt = m.dt;
  n.seed = m.seed;
  n.stream_id = m.stream_id;
  for (std::size_t k = 0; k < a.size(); ++k) {
    Mat<S> gap = hermitian_part(Mat<S>(a_inf.matrix() - a.at(k)));
    Eigen::LLT<Mat<S>> llt(gap);
    if (llt.info() != Eigen::Success) throw OrderViolation("A_inf - A_t not positive definite at t=" + std::to_string(a.grid[k]));
    n.push(a.grid[k], Mat<S>(a_inf.matrix() * llt.solve(m.at(m.zero_index + k))));
  }
  return n;
}

// Matrix of the running integral of M^T (A_inf - A_s)^{-1} M computed as
// the inverse of tilde A_s = M_s^{-1}(A_inf - A_s)M_s^{-T}, by the backward
// recursion tilde A_s = h/2 (I + E E^T) + E tilde A_{s+h} E^T.
template <class S>
std::vector<Mat<S>> backward_tail(const FlowParams& p, const std::vector<Mat<S>>& factors) {
  const int r = p.dim;
  std::vector<Mat<S>> out(factors.size() + 1);
  Mat<S> t = Mat<S>::Zero(r, r);
  out.back() = t;
  for (std::size_t k = factors.size(); k-- > 0;) {
    const Mat<S>& e = factors[k];
    t = 0.5 * p.dt * (identity<S>(r) + e * e.adjoint()) + e * t * e.adjoint();
    t = hermitian_part(t);
    out[k] = t;
  }
  return out;
}

// Drift-corrected noise hat B_t = B_t - int_0^t (2 mu I - M^T (A_inf - A_s)^{-1} M) ds
// along a fresh M path of negative drift run until its tail is negligible.
template <class S>
MatrixPath<S> enlarged_noise(const FlowParams& p, RngStream& rng) {
  p.validate();
  p.require_convergent();
  const int r = p.dim;
  const double rate = tail_decay_rate(p, p.mu);
  const NoiseSpec ns = p.noise();
  const std::size_t nmin = static_cast<std::size_t>(p.steps());
  const std::size_t nmax = static_cast<std::size_t>(std::lround(p.horizon_max / p.dt));
  std::vector<Mat<S>> noise, factors;
  Mat<S> m = identity<S>(r), a = Mat<S>::Zero(r, r), prev = identity<S>(r), a_obs = a;
  std::size_t k = 0;
  for (;; ++k) {
    if (k >= nmax) throw HorizonTooShort("tail not below tolerance by horizon_max");
    Mat<S> db = bm_increment<S>(ns, p.dt, rng);
    Mat<S> e = increment_factor<S>(p, db, -p.mu, p.dt);
    noise.push_back(db);
    factors.push_back(e);
    m = m * e;
    Mat<S> y = m * m.adjoint();
    a += 0.5 * p.dt * (prev + y);
    prev = y;
    if (k + 1 == nmin) a_obs = a;
    // the remainder must be small against what accrued after the horizon
    if (k + 1 > nmin && trace_re(y) / rate < p.tail_tol * trace_re(Mat<S>(a - a_obs))) break;
  }
  auto tail = backward_tail<S>(p, factors);
  MatrixPath<S> out;
  out.dim = r;
  out.dt = p.dt;
  Mat<S> bhat = Mat<S>::Zero(r, r);
  out.push(0.0, bhat);
  Mat<S> prev_c = 2.0 * p.mu * identity<S>(r) - Mat<S>(tail[0].inverse());
  for (std::size_t j = 0; j < nmin; ++j) {
    Mat<S> cur_c = 2.0 * p.mu * identity<S>(r) - Mat<S>(tail[j + 1].inverse());
    bhat += noise[j] - 0.5 * p.dt * (prev_c + cur_c);
    prev_c = cur_c;
    out.push((j + 1) * p.dt, bhat);
  }
  return out;
}

// (F, G) of the two-input Burke construction.  H solves
// dH = H (dB + dC) + (2 mu + 1) H dt on the whole line; the compensator uses
// H_s^T A_{(-inf,s)}^{-1} H_s = tilde X_s^{-1} with tilde X from the stable recursion.
template <class S>
std::pair<MatrixPath<S>, MatrixPath<S>> burke_F_G(const FlowParams& p, RngStream& rng, bool with_compensator = true) {
  p.validate();
  p.require_convergent();
  const int r = p.dim;
  const NoiseSpec ns = p.noise();
  FlowParams pe = p;
  pe.scheme = Scheme::exponential;
  // negative side: int_{-inf}^0 H H^T, H_{-u} has exponent drift -2 mu and noise variance 2
  RngStream neg = rng.split(1);
  Mat<S> xt = tail_integral<S>(pe, 2.0 * p.mu, 2.0, neg);
  MatrixPath<S> f, g;
  f.dim = g.dim = r;
  f.dt = g.dt = p.dt;
  Mat<S> fb = Mat<S>::Zero(r, r), gc = Mat<S>::Zero(r, r);
  f.push(0.0, fb);
  g.push(0.0, gc);
  Mat<S> prev_inv = xt.inverse();
  const int n = p.steps();
  for (int k = 0; k < n; ++k) {
    Mat<S> db = bm_increment<S>(ns, p.dt, rng);
    Mat<S> dc = bm_increment<S>(ns, p.dt, rng);
    Mat<S> e = increment_factor<S>(pe, Mat<S>(db + dc), 2.0 * p.mu, p.dt);
    xt = x_recursion_step<S>(xt, e, p.dt);
    Mat<S> cur_inv = xt.inverse();
    Mat<S> comp = -0.25 * p.dt * (prev_inv + cur_inv);
    if (with_compensator) comp.diagonal().array() += S(2.0 * p.mu * p.dt);
    prev_inv = cur_inv;
    fb += db + comp;
    gc += dc + comp;
    f.push((k + 1) * p.dt, fb);
    g.push((k + 1) * p.dt, gc);
  }
  return {std::move(f), std::move(g)};
}

// lhs_t = (int_{-inf}^0 M M^T)^{-1} M_t (M_t^{-1} int_{-inf}^t M M^T M_t^{-T})
// for M of drift +mu, and an independent M path for reference.
template <class S>
std::pair<MatrixPath<S>, MatrixPath<S>> burke_oioo_path(const FlowParams& p, RngStream& rng) {
  p.validate();
  p.require_convergent();
  const int r = p.dim;
  FlowParams pp = p;
  pp.drift_sign = DriftSign::plus;
  RngStream neg = rng.split(1);
  const Mat<S> q0 = tail_integral<S>(pp, p.mu, 1.0, neg);
  const Mat<S> q0inv = q0.inverse();
  const NoiseSpec ns = p.noise();
  MatrixPath<S> lhs;
  lhs.dim = r;
  lhs.dt = p.dt;
  Mat<S> m = identity<S>(r), q = q0;
  lhs.push(0.0, Mat<S>(q0inv * m * q));
  const int n = p.steps();
  for (int k = 0; k < n; ++k) {
    Mat<S> e = increment_factor<S>(pp, bm_increment<S>(ns, p.dt, rng), p.mu, p.dt);
    m = m * e;
    q = x_recursion_step<S>(q, e, p.dt);
    lhs.push((k + 1) * p.dt, Mat<S>(q0inv * m * q));
  }
  RngStream ref = rng.split(2);
  auto rhs = evolve_M<S>(pp, ref);
  return {std::move(lhs), std::move(rhs)};
}

}  // namespace gldiff
