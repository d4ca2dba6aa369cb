#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"
#include "laws.hpp"
#include "matcore.hpp"
#include "rng.hpp"

namespace gldiff {

// log K_nu(x) from K_nu(x) = int_0^infty e^{-x cosh u} cosh(nu u) du, with the
// integrand rescaled by its maximum so large orders and arguments stay finite.
// The range is cut into pieces of geometrically growing width around the peak,
// measured in units of the peak width.
inline double log_macdonald_K(double nu, double x) {
  if (!(x > 0.0)) throw DomainError("Macdonald function needs x > 0");
  nu = std::abs(nu);
  const double us = std::asinh(nu / x);
  auto g = [&](double u) { return nu * u - x * std::cosh(u); };
  const double gs = g(us);
  auto f = [&](double u) { return std::exp(g(u) - gs) * 0.5 * (1.0 + std::exp(-2.0 * nu * u)); };
  const double w = 1.0 / std::sqrt(x * std::cosh(us));
  using boost::math::quadrature::gauss_kronrod;
  auto piece = [&](double a, double b) { return gauss_kronrod<double, 31>::integrate(f, a, b, 8, 1e-13); };
  double v = 0.0;
  // right of the peak until the log-integrand has dropped by 60
  for (double lo = us, step = w;; step *= 2.0) {
    v += piece(lo, lo + step);
    lo += step;
    if (g(lo) - gs < -60.0) break;
  }
  // left of the peak down to 0
  for (double hi = us, step = w; hi > 0.0; step *= 2.0) {
    const double lo = std::max(0.0, hi - step);
    v += piece(lo, hi);
    hi = lo;
    if (g(hi) - gs < -60.0) break;
  }
  return gs + std::log(v);
}

// K_nu(x); returns 0 when the value underflows (use log_macdonald_K then).
inline double macdonald_K(double nu, double x) { return std::exp(log_macdonald_K(nu, x)); }

inline bool macdonald_underflows(double nu, double x) {
  return log_macdonald_K(nu, x) < std::log(std::numeric_limits<double>::min());
}

// p_s(Y) = prod_k det(Y_k)^{s_k} over the leading k x k minors.
inline double power_function(const std::vector<double>& s, const RMat& y) {
  const int r = static_cast<int>(y.rows());
  if (static_cast<int>(s.size()) != r) throw DomainError("index length must equal dimension");
  Eigen::LLT<RMat> llt(hermitian_part(y));
  if (llt.info() != Eigen::Success) throw DomainError("argument is not positive definite");
  const RMat l = llt.matrixL();
  // det(Y_k) = prod_{i<k} L_ii^2
  double logp = 0.0, ldet = 0.0;
  for (int k = 0; k < r; ++k) {
    ldet += 2.0 * std::log(l(k, k));
    logp += s[k] * ldet;
  }
  return std::exp(logp);
}

inline double log_power_function(const std::vector<double>& s, const RMat& y) {
  const int r = static_cast<int>(y.rows());
  Eigen::LLT<RMat> llt(hermitian_part(y));
  if (llt.info() != Eigen::Success) throw DomainError("argument is not positive definite");
  const RMat l = llt.matrixL();
  double logp = 0.0, ldet = 0.0;
  for (int k = 0; k < r; ++k) {
    ldet += 2.0 * std::log(l(k, k));
    logp += s[k] * ldet;
  }
  return logp;
}

enum class BesselMethod { automatic, quadrature, importance_mc };

// K_r(s | A, B) = 1/2 int p_s(X) e^{-(tr AX + tr BX^{-1})/2} det X^{-(r+1)/2} dX.
// A scalar index s stands for the vector (0, ..., 0, s).
struct BesselQuery {
  int dim = 1;
  std::vector<double> index;
  RMat a;
  RMat b;
  BesselMethod method = BesselMethod::automatic;
  std::size_t budget = 1000000;
};

struct BesselValue {
  double log_value = 0.0;
  double std_error = 0.0;  // of log_value
};

namespace detail {

inline std::vector<double> full_index(const BesselQuery& q) {
  if (static_cast<int>(q.index.size()) == q.dim) return q.index;
  if (q.index.size() != 1) throw PreconditionError("index must be scalar or of length r");
  std::vector<double> s(q.dim, 0.0);
  s.back() = q.index[0];
  return s;
}

inline double log_wishart_normalizer(int r, double n, const SPDMatrix<double>& a) {
  return 0.5 * n * r * std::log(2.0) - 0.5 * n * a.log_det() + log_mvgamma(r, 0.5 * n);
}

struct LogMeanExp {
  double m = -INFINITY;
  double s1 = 0.0, s2 = 0.0;
  std::size_t n = 0;
  void add(double lw) {
    ++n;
    if (lw > m) {
      const double f = std::exp(m - lw);
      s1 *= f;
      s2 *= f * f;
      m = lw;
    }
    const double w = std::exp(lw - m);
    s1 += w;
    s2 += w * w;
  }
  double log_mean() const { return m + std::log(s1 / n); }
  double rel_error() const {
    const double mean = s1 / n;
    const double var = std::max(0.0, s2 / n - mean * mean);
    return std::sqrt(var / n) / mean;
  }
};

}  // namespace detail

inline BesselValue kbessel_matrix(const BesselQuery& q, RngStream& rng) {
  const int r = q.dim;
  if (q.a.rows() != r || q.b.rows() != r) throw PreconditionError("A and B must be r x r");
  SPDMatrix<double> a(q.a), b(q.b);
  const bool scalar = q.index.size() == 1 || r == 1;
  if (r == 1 && q.method != BesselMethod::importance_mc) {
    const double s = q.index.back(), av = q.a(0, 0), bv = q.b(0, 0);
    return {0.5 * s * std::log(bv / av) + log_macdonald_K(s, std::sqrt(av * bv)), 0.0};
  }
  if (q.method == BesselMethod::quadrature) throw PreconditionError("quadrature is available for r = 1 only");
  if (q.budget < 10000) throw PreconditionError("Monte Carlo budget must be at least 1e4");
  auto s = detail::full_index(q);
  double total = 0.0;
  for (double v : s) total += v;
  if (scalar && total < -0.5 * (r - 1)) {
    // inversion X -> X^{-1}: K_r(s | A, B) = K_r(-s | B, A)
    BesselQuery flipped = q;
    flipped.index = {-total};
    std::swap(flipped.a, flipped.b);
    return kbessel_matrix(flipped, rng);
  }
  const double n = total > 0.5 * (r - 1) ? 2.0 * total : static_cast<double>(r);
  WishartSpec<double> ws{r, n, SPDMatrix<double>(a.inverse())};
  const double lz = detail::log_wishart_normalizer(r, n, a);
  detail::LogMeanExp acc;
  for (std::size_t i = 0; i < q.budget; ++i) {
    SPDMatrix<double> x = sample_wishart(ws, rng);
    const double lw = log_power_function(s, x.matrix()) - 0.5 * n * x.log_det() -
                      0.5 * (q.b.cwiseProduct(x.inverse())).sum();
    acc.add(lw);
  }
  const double rel = acc.rel_error();
  if (rel > 0.05) throw HighVariance("relative Monte Carlo error " + std::to_string(rel));
  return {std::log(0.5) + lz + acc.log_mean(), rel};
}

// ---------------------------------------------------------------------------
// kappa_p(A, B): mean of the matrix GIG law eta_{p,A,B}.

enum class KappaMethod { automatic, importance, mcmc };

struct KappaEstimate {
  RMat mean;
  RMat std_error;
  double ess = 0.0;
  KappaMethod method = KappaMethod::importance;
};

namespace detail {

inline KappaEstimate kappa_importance(double p, const RMat& a, const RMat& b, std::size_t budget, RngStream& rng) {
  const int r = static_cast<int>(a.rows());
  // proposal and log-weight for each sign regime
  const bool inverse = p < -0.5 * (r - 1);
  const double n = inverse ? -2.0 * p : (p > 0.5 * (r - 1) ? 2.0 * p : static_cast<double>(r));
  SPDMatrix<double> pa(inverse ? b : a);
  WishartSpec<double> ws{r, n, SPDMatrix<double>(pa.inverse())};
  std::vector<RMat> xs;
  std::vector<double> lws;
  xs.reserve(budget);
  lws.reserve(budget);
  double lmax = -INFINITY;
  for (std::size_t i = 0; i < budget; ++i) {
    SPDMatrix<double> y = sample_wishart(ws, rng);
    RMat x;
    double lw;
    if (inverse) {
      x = y.inverse();
      lw = -0.5 * (a.cwiseProduct(x)).sum();
    } else {
      x = y.matrix();
      lw = (p - 0.5 * n) * y.log_det() - 0.5 * (b.cwiseProduct(y.inverse())).sum();
    }
    lmax = std::max(lmax, lw);
    xs.push_back(std::move(x));
    lws.push_back(lw);
  }
  double sw = 0.0, sw2 = 0.0;
  RMat num = RMat::Zero(r, r);
  for (std::size_t i = 0; i < budget; ++i) {
    const double w = std::exp(lws[i] - lmax);
    lws[i] = w;
    sw += w;
    sw2 += w * w;
    num += w * xs[i];
  }
  KappaEstimate out;
  out.mean = num / sw;
  RMat var = RMat::Zero(r, r);
  for (std::size_t i = 0; i < budget; ++i) {
    RMat d = xs[i] - out.mean;
    var += (lws[i] * lws[i]) * d.cwiseProduct(d);
  }
  out.std_error = var.cwiseSqrt() / sw;
  out.ess = sw * sw / sw2;
  out.method = KappaMethod::importance;
  return out;
}

inline KappaEstimate kappa_mcmc(double p, const RMat& a, const RMat& b, std::size_t budget, RngStream& rng) {
  const int r = static_cast<int>(a.rows());
  MatrixGIGSpec spec{r, p, a, b};
  McmcOptions opt;
  opt.samples = budget;
  opt.burn_in = std::max<std::size_t>(2000, budget / 5);
  GigChain chain = sample_matrix_gig(spec, opt, rng);
  KappaEstimate out;
  out.mean = RMat::Zero(r, r);
  for (const auto& x : chain.samples) out.mean += x;
  out.mean /= double(chain.samples.size());
  out.std_error = RMat::Zero(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) {
      std::vector<double> series;
      series.reserve(chain.samples.size());
      for (const auto& x : chain.samples) series.push_back(x(i, j));
      double var = 0.0;
      for (double v : series) var += (v - out.mean(i, j)) * (v - out.mean(i, j));
      var /= (series.size() - 1);
      out.std_error(i, j) = std::sqrt(var / effective_sample_size(series));
    }
  out.ess = chain.ess;
  out.method = KappaMethod::mcmc;
  return out;
}

}  // namespace detail

// Importance sampling against a Wishart (or inverse Wishart) proposal matched
// to the dominant exponential factor; automatic mode falls back to the MCMC
// sampler when fewer than 5% of the draws carry the weight.
inline KappaEstimate kappa_mean(double p, const RMat& a, const RMat& b, std::size_t budget, RngStream& rng,
                                KappaMethod method = KappaMethod::automatic) {
  SPDMatrix<double> ca(a), cb(b);
  (void)ca;
  (void)cb;
  if (method == KappaMethod::mcmc) return detail::kappa_mcmc(p, a, b, budget, rng);
  KappaEstimate is = detail::kappa_importance(p, a, b, budget, rng);
  if (method == KappaMethod::importance || is.ess >= 0.05 * budget) return is;
  return detail::kappa_mcmc(p, a, b, budget, rng);
}

// Mean of the scalar GIG x^{p-1} e^{-(a x + b/x)/2}.
inline double gig_mean(double p, double a, double b) {
  const double w = std::sqrt(a * b);
  return std::sqrt(b / a) * std::exp(log_macdonald_K(p + 1.0, w) - log_macdonald_K(p, w));
}

// Table of log [kappa_mu(diag(lambda), I)]_11 on a lattice in log lambda,
// interpolated multilinearly and extended linearly beyond its edges.
class KappaTable {
 public:
  struct Options {
    double log_lo = -6.0;
    double log_hi = 8.0;
    int points = 21;
    std::size_t budget = 20000;
  };

  KappaTable() = default;

  static KappaTable build(int r, double mu, const Options& opt, RngStream& rng) {
    if (!(std::abs(mu) > 0.5 * (r - 1))) throw PreconditionError("requires |mu| > (r - 1)/2");
    KappaTable t;
    t.dim_ = r;
    t.mu_ = mu;
    t.axis_.resize(opt.points);
    for (int i = 0; i < opt.points; ++i) t.axis_[i] = opt.log_lo + (opt.log_hi - opt.log_lo) * i / (opt.points - 1);
    std::size_t total = 1;
    for (int k = 0; k < r; ++k) total *= opt.points;
    t.log_values_.resize(total);
    t.rel_err_.resize(total);
    for (std::size_t idx = 0; idx < total; ++idx) {
      RVec lam(r);
      std::size_t rem = idx;
      for (int k = 0; k < r; ++k) {
        lam[k] = std::exp(t.axis_[rem % opt.points]);
        rem /= opt.points;
      }
      if (r == 1) {
        t.log_values_[idx] = std::log(gig_mean(mu, lam[0], 1.0));
        t.rel_err_[idx] = 0.0;
        continue;
      }
      RngStream s = rng.split(idx);
      KappaEstimate e = kappa_mean(mu, RMat(lam.asDiagonal()), identity<double>(r), opt.budget, s);
      const double v = e.mean(0, 0);
      t.rel_err_[idx] = e.std_error(0, 0) / v;
      if (!(v > 0.0) || t.rel_err_[idx] > 0.1)
        throw KappaEvaluationFailure("relative error above 10% at lattice point " + std::to_string(idx));
      t.log_values_[idx] = std::log(v);
    }
    return t;
  }

  int dim() const { return dim_; }
  double mu() const { return mu_; }
  const std::vector<double>& axis() const { return axis_; }
  const std::vector<double>& log_values() const { return log_values_; }
  const std::vector<double>& rel_errors() const { return rel_err_; }

  // [kappa(diag(lambda), I)]_11
  double kappa11(const RVec& lambda) const {
    const int r = dim_, m = static_cast<int>(axis_.size());
    const double step = axis_[1] - axis_[0];
    std::vector<int> cell(r);
    std::vector<double> frac(r);
    for (int k = 0; k < r; ++k) {
      const double x = std::log(lambda[k]);
      int c = static_cast<int>(std::floor((x - axis_[0]) / step));
      c = std::clamp(c, 0, m - 2);
      cell[k] = c;
      frac[k] = (x - axis_[c]) / step;
    }
    double v = 0.0;
    for (int corner = 0; corner < (1 << r); ++corner) {
      double w = 1.0;
      std::size_t idx = 0, mul = 1;
      for (int k = 0; k < r; ++k) {
        const int bit = (corner >> k) & 1;
        w *= bit ? frac[k] : 1.0 - frac[k];
        idx += (cell[k] + bit) * mul;
        mul *= m;
      }
      v += w * log_values_[idx];
    }
    return std::exp(v);
  }

  // diagonal of kappa(diag(lambda), I), using the permutation symmetry
  RVec operator()(const RVec& lambda) const {
    RVec out(dim_);
    for (int i = 0; i < dim_; ++i) {
      RVec l = lambda;
      std::swap(l[0], l[i]);
      out[i] = kappa11(l);
    }
    return out;
  }

 private:
  int dim_ = 1;
  double mu_ = 0.0;
  std::vector<double> axis_;
  std::vector<double> log_values_;
  std::vector<double> rel_err_;
};

// ---------------------------------------------------------------------------
// Residual of (G_Y - tr(Y)/2) U = 0 for U(Y) = E exp(-tr(Y W)/2), W inverse
// Wishart of parameter 2 mu; equivalently U = K_r(-mu | Y, I) / (2^{mu r - 1} Gamma_r(mu)).
// G_Y = sum_{i<=j, k<=l} (y_ik y_jl + y_il y_jk) d^2/dy_ij dy_kl + (r + 1 - 2 mu) sum_{i<=j} y_ij d/dy_ij.

struct PdeResidual {
  double residual = 0.0;
  double std_error = 0.0;
};

namespace detail {

// Applies G_Y - tr(Y)/2 by central differences to a family of functions of Y
// evaluated through `eval`, which returns one value per Monte Carlo draw (or a
// single value for deterministic U).
template <class Eval>
std::vector<double> apply_bessel_operator(const RMat& y, double mu, double h, Eval&& eval) {
  const int r = static_cast<int>(y.rows());
  std::vector<std::pair<int, int>> coords;
  for (int i = 0; i < r; ++i)
    for (int j = i; j < r; ++j) coords.push_back({i, j});
  const int m = static_cast<int>(coords.size());
  auto shifted = [&](int a, double da, int b, double db) {
    RMat z = y;
    auto bump = [&](int c, double d) {
      if (c < 0) return;
      auto [i, j] = coords[c];
      z(i, j) += d;
      if (i != j) z(j, i) += d;
    };
    bump(a, da);
    bump(b, db);
    return eval(z);
  };
  const std::vector<double> u0 = eval(y);
  const std::size_t n = u0.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) out[k] = -0.5 * y.trace() * u0[k];
  for (int a = 0; a < m; ++a) {
    auto [i, j] = coords[a];
    const auto up = shifted(a, h, -1, 0.0), dn = shifted(a, -h, -1, 0.0);
    const double first = (r + 1.0 - 2.0 * mu) * y(i, j);
    const double caa = y(i, i) * y(j, j) + y(i, j) * y(j, i);
    for (std::size_t k = 0; k < n; ++k) {
      out[k] += first * (up[k] - dn[k]) / (2.0 * h);
      out[k] += caa * (up[k] - 2.0 * u0[k] + dn[k]) / (h * h);
    }
    for (int b = a + 1; b < m; ++b) {
      auto [kk, l] = coords[b];
      // the operator counts the (a, b) and (b, a) terms
      const double cab = 2.0 * (y(i, kk) * y(j, l) + y(i, l) * y(j, kk));
      const auto pp = shifted(a, h, b, h), pm = shifted(a, h, b, -h);
      const auto mp = shifted(a, -h, b, h), mm = shifted(a, -h, b, -h);
      for (std::size_t k = 0; k < n; ++k) out[k] += cab * (pp[k] - pm[k] - mp[k] + mm[k]) / (4.0 * h * h);
    }
  }
  return out;
}

}  // namespace detail

// Normalized U at r = 1 by quadrature: y^{mu/2} K_mu(sqrt y) / (2^{mu-1} Gamma(mu)).
inline double bessel_U_scalar(double y, double mu) {
  if (y == 0.0) return 1.0;
  return std::exp(0.5 * mu * std::log(y) + log_macdonald_K(mu, std::sqrt(y)) - (mu - 1.0) * std::log(2.0) -
                  std::lgamma(mu));
}

inline PdeResidual pde_residual_U(const RMat& y, double mu, double fd_step, std::size_t budget, RngStream& rng) {
  const int r = static_cast<int>(y.rows());
  if (!(2.0 * mu > r - 1)) throw PreconditionError("requires 2 mu > r - 1");
  SPDMatrix<double> check(y);
  (void)check;
  if (fd_step <= 0.0) fd_step = 1e-3 * (1.0 + y.norm());
  if (r == 1) {
    auto eval = [&](const RMat& z) { return std::vector<double>{bessel_U_scalar(z(0, 0), mu)}; };
    const double g1 = detail::apply_bessel_operator(y, mu, fd_step, eval)[0];
    const double g2 = detail::apply_bessel_operator(y, mu, 0.5 * fd_step, eval)[0];
    const double u = eval(y)[0];
    // halving must not change the answer by more than the tolerance scale
    if (std::abs(g1 - g2) > 0.1 * std::abs(u) && std::abs(g1 - g2) > 10.0 * std::abs(g1))
      throw StepTooSmall("finite-difference estimate unstable under step halving");
    return {std::abs(g2 / u), 0.0};
  }
  // common random numbers: one set of inverse Wishart draws for every stencil point
  WishartSpec<double> ws{r, 2.0 * mu, std::nullopt};
  std::vector<RMat> draws;
  draws.reserve(budget);
  for (std::size_t i = 0; i < budget; ++i) draws.push_back(sample_inv_wishart(ws, rng).matrix());
  auto eval = [&](const RMat& z) {
    std::vector<double> v(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i) v[i] = std::exp(-0.5 * (z.cwiseProduct(draws[i])).sum());
    return v;
  };
  const auto g = detail::apply_bessel_operator(y, mu, fd_step, eval);
  const auto g_half = detail::apply_bessel_operator(y, mu, 0.5 * fd_step, eval);
  const auto u = eval(y);
  double mg = 0.0, mg2 = 0.0, mu_ = 0.0, mh = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    mg += g[i];
    mg2 += g[i] * g[i];
    mu_ += u[i];
    mh += g_half[i];
  }
  const double n = static_cast<double>(u.size());
  mg /= n;
  mg2 /= n;
  mu_ /= n;
  mh /= n;
  const double se = std::sqrt(std::max(0.0, mg2 - mg * mg) / n);
  if (std::abs(mg - mh) > std::max(10.0 * se, 0.1 * mu_)) throw StepTooSmall("finite-difference estimate unstable under step halving");
  return {std::abs(mg / mu_), se / mu_};
}

// ---------------------------------------------------------------------------

struct MellinIndex {
  int dim = 1;
  double mu = 0.0;
  std::vector<double> s;
};

struct MellinMultipliers {
  double c1 = 0.0, c2 = 0.0, c3 = 0.0, residual = 0.0;
};

// With r_j = 2 (s_j + ... + s_r):
//   c1 = sum r_i^2 + (2 mu + r + 1) sum r_i - 2 sum i r_i
//   c2 = sum r_i
//   c3 = sum r_i^2 + 2 (r + 1) sum r_i - 2 sum i r_i
// and residual = c3 + (2 mu - r - 1) c2 - c1.
inline MellinMultipliers mellin_multipliers(const MellinIndex& idx) {
  const int r = idx.dim;
  if (static_cast<int>(idx.s.size()) != r) throw PreconditionError("index length must equal dimension");
  std::vector<double> rj(r);
  double tail = 0.0;
  for (int j = r - 1; j >= 0; --j) {
    tail += idx.s[j];
    rj[j] = 2.0 * tail;
  }
  double sq = 0.0, sum = 0.0, wsum = 0.0;
  for (int i = 0; i < r; ++i) {
    sq += rj[i] * rj[i];
    sum += rj[i];
    wsum += (i + 1) * rj[i];
  }
  MellinMultipliers m;
  m.c1 = sq + (2.0 * idx.mu + r + 1.0) * sum - 2.0 * wsum;
  m.c2 = sum;
  m.c3 = sq + 2.0 * (r + 1.0) * sum - 2.0 * wsum;
  m.residual = m.c3 + (2.0 * idx.mu - r - 1.0) * m.c2 - m.c1;
  return m;
}

}  // namespace gldiff
