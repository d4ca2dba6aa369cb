#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "errors.hpp"
#include "matcore.hpp"
#include "rng.hpp"

namespace gldiff {

// log of the multivariate gamma function; beta = 1 gives
// Gamma_r(a) = pi^{r(r-1)/4} prod_k Gamma(a - (k-1)/2), beta = 2 the complex analogue.
// Returns log |Gamma_r(a)|.
inline double log_mvgamma(int r, double a, int beta = 1) {
  const double step = beta == 1 ? 0.5 : 1.0;
  double s = 0.25 * beta * r * (r - 1) * std::log(M_PI);
  for (int k = 0; k < r; ++k) {
    const double x = a - step * k;
    if (x <= 0.0 && x == std::floor(x)) throw PoleError("Gamma pole at " + std::to_string(x));
    s += std::lgamma(x);
  }
  return s;
}

inline double mvgamma(int r, double a) { return log_mvgamma(r, a); }

// Wishart law of parameter p: real case density
//   det X^{(p-r-1)/2} e^{-tr(Sigma^{-1}X)/2} / (2^{pr/2} det Sigma^{p/2} Gamma_r(p/2)),
// complex case W = G G^* with unit complex Gaussian columns,
//   det X^{p-r} e^{-tr(Sigma^{-1}X)} / (det Sigma^p Gamma~_r(p)).
template <class S>
struct WishartSpec {
  int dim = 1;
  double dof = 1.0;
  std::optional<SPDMatrix<S>> scale;  // identity when empty

  void validate() const {
    if (dim < 1) throw PreconditionError("dim must be positive");
    if (!(dof > dim - 1)) throw PreconditionError("Wishart requires dof > r - 1");
    if (scale && scale->dim() != dim) throw PreconditionError("scale has wrong dimension");
  }
};

template <class S>
SPDMatrix<S> sample_wishart(const WishartSpec<S>& spec, RngStream& rng) {
  spec.validate();
  const int r = spec.dim;
  Mat<S> t = Mat<S>::Zero(r, r);
  for (int i = 0; i < r; ++i) {
    if constexpr (is_complex_v<S>) {
      t(i, i) = std::sqrt(rng.gamma(spec.dof - i));
      for (int j = 0; j < i; ++j) t(i, j) = S(rng.normal(), rng.normal()) * M_SQRT1_2;
    } else {
      t(i, i) = std::sqrt(2.0 * rng.gamma(0.5 * (spec.dof - i)));
      for (int j = 0; j < i; ++j) t(i, j) = rng.normal();
    }
  }
  if (spec.scale) t = spec.scale->cholesky() * t;
  return SPDMatrix<S>(Mat<S>(t * t.adjoint()));
}

template <class S>
SPDMatrix<S> sample_inv_wishart(const WishartSpec<S>& spec, RngStream& rng) {
  return SPDMatrix<S>(sample_wishart(spec, rng).inverse());
}

template <class S>
double wishart_logpdf(const SPDMatrix<S>& x, const WishartSpec<S>& spec) {
  spec.validate();
  if (x.dim() != spec.dim) throw DomainError("dimension mismatch");
  const int r = spec.dim;
  const double p = spec.dof;
  double tr = 0.0, ldet_scale = 0.0;
  if (spec.scale) {
    tr = trace_re(Mat<S>(spec.scale->inverse() * x.matrix()));
    ldet_scale = spec.scale->log_det();
  } else {
    tr = trace_re(x.matrix());
  }
  if constexpr (is_complex_v<S>) {
    return (p - r) * x.log_det() - tr - p * ldet_scale - log_mvgamma(r, p, 2);
  } else {
    return 0.5 * (p - r - 1) * x.log_det() - 0.5 * tr - 0.5 * p * r * std::log(2.0) - 0.5 * p * ldet_scale -
           log_mvgamma(r, 0.5 * p);
  }
}

template <class S>
double wishart_logpdf(const Mat<S>& x, const WishartSpec<S>& spec) {
  try {
    return wishart_logpdf(SPDMatrix<S>(x), spec);
  } catch (const NotPositiveDefinite&) {
    throw DomainError("argument is not positive definite");
  }
}

// Density of the inverse of a Wishart draw; Jacobian det X^{-(r+1)} (real), det X^{-2r} (complex).
template <class S>
double inv_wishart_logpdf(const SPDMatrix<S>& x, const WishartSpec<S>& spec) {
  const int r = spec.dim;
  const double jac = is_complex_v<S> ? 2.0 * r : r + 1.0;
  return wishart_logpdf(SPDMatrix<S>(x.inverse()), spec) - jac * x.log_det();
}

// ---------------------------------------------------------------------------
// Scalar GIG: density proportional to x^{p-1} e^{-(a x + b / x)/2}.

namespace detail {

inline double gig_mode(double lambda, double omega) {
  if (lambda >= 1.0) return (std::sqrt((lambda - 1.0) * (lambda - 1.0) + omega * omega) + (lambda - 1.0)) / omega;
  return omega / (std::sqrt((1.0 - lambda) * (1.0 - lambda) + omega * omega) + (1.0 - lambda));
}

// ratio-of-uniforms with mode shift for x^{lambda-1} e^{-omega (x + 1/x)/2}
inline double gig_rou_shift(double lambda, double omega, RngStream& rng) {
  const double t = 0.5 * (lambda - 1.0), s = 0.25 * omega;
  const double xm = gig_mode(lambda, omega);
  const double nc = t * std::log(xm) - s * (xm + 1.0 / xm);
  const double a = -(2.0 * (lambda + 1.0) / omega + xm);
  const double b = 2.0 * (lambda - 1.0) * xm / omega - 1.0;
  const double c = xm;
  const double p = b - a * a / 3.0;
  const double q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
  const double fi = std::acos(-q / (2.0 * std::sqrt(-p * p * p / 27.0)));
  const double fak = 2.0 * std::sqrt(-p / 3.0);
  const double y1 = fak * std::cos(fi / 3.0) - a / 3.0;
  const double y2 = fak * std::cos(fi / 3.0 + 4.0 / 3.0 * M_PI) - a / 3.0;
  const double uplus = (y1 - xm) * std::exp(t * std::log(y1) - s * (y1 + 1.0 / y1) - nc);
  const double uminus = (y2 - xm) * std::exp(t * std::log(y2) - s * (y2 + 1.0 / y2) - nc);
  for (;;) {
    const double u = uminus + rng.uniform() * (uplus - uminus);
    const double v = rng.uniform();
    const double x = u / v + xm;
    if (x > 0.0 && std::log(v) <= t * std::log(x) - s * (x + 1.0 / x) - nc) return x;
  }
}

// rejection from a piecewise hat, for lambda < 1 and small omega
inline double gig_concave(double lambda, double omega, RngStream& rng) {
  const double xm = gig_mode(lambda, omega);
  const double x0 = omega / (1.0 - lambda);
  const double k0 = std::exp((lambda - 1.0) * std::log(xm) - 0.5 * omega * (xm + 1.0 / xm));
  double a0 = k0 * x0, a1, a2, k1, k2;
  if (x0 >= 2.0 / omega) {
    k1 = 0.0;
    a1 = 0.0;
    k2 = std::pow(x0, lambda - 1.0);
    a2 = k2 * 2.0 * std::exp(-omega * x0 / 2.0) / omega;
  } else {
    k1 = std::exp(-omega);
    a1 = lambda == 0.0 ? k1 * std::log(2.0 / (omega * omega))
                       : k1 / lambda * (std::pow(2.0 / omega, lambda) - std::pow(x0, lambda));
    k2 = std::pow(2.0 / omega, lambda - 1.0);
    a2 = k2 * 2.0 * std::exp(-1.0) / omega;
  }
  const double total = a0 + a1 + a2;
  for (;;) {
    double v = total * rng.uniform();
    double x, hx;
    if (v <= a0) {
      x = x0 * v / a0;
      hx = k0;
    } else if ((v -= a0) <= a1) {
      if (lambda == 0.0) {
        x = omega * std::exp(std::exp(omega) * v);
        hx = k1 / x;
      } else {
        x = std::pow(std::pow(x0, lambda) + lambda / k1 * v, 1.0 / lambda);
        hx = k1 * std::pow(x, lambda - 1.0);
      }
    } else {
      v -= a1;
      const double a = std::max(x0, 2.0 / omega);
      x = -2.0 / omega * std::log(std::exp(-omega / 2.0 * a) - omega / (2.0 * k2) * v);
      hx = k2 * std::exp(-omega / 2.0 * x);
    }
    const double u = rng.uniform() * hx;
    if (std::log(u) <= (lambda - 1.0) * std::log(x) - omega / 2.0 * (x + 1.0 / x)) return x;
  }
}

}  // namespace detail

inline double sample_gig_scalar(double p, double a, double b, RngStream& rng) {
  if (a < 0.0 || b < 0.0 || (a == 0.0 && b == 0.0)) throw PreconditionError("GIG needs a, b >= 0, not both zero");
  if (b == 0.0) {
    if (!(p > 0.0)) throw PreconditionError("b = 0 requires p > 0");
    return rng.gamma(p, 2.0 / a);
  }
  if (a == 0.0) {
    if (!(p < 0.0)) throw PreconditionError("a = 0 requires p < 0");
    return 1.0 / rng.gamma(-p, 2.0 / b);
  }
  const double lambda = std::abs(p), omega = std::sqrt(a * b), scale = std::sqrt(b / a);
  double x;
  if (omega < 1e-12 && p != 0.0) {
    // the GIG has collapsed onto its gamma or inverse-gamma limit
    return p > 0.0 ? rng.gamma(p, 2.0 / a) : 1.0 / rng.gamma(-p, 2.0 / b);
  }
  if (lambda < 1.0 && omega <= (2.0 / 3.0) * std::sqrt(1.0 - lambda))
    x = detail::gig_concave(lambda, omega, rng);
  else
    x = detail::gig_rou_shift(lambda, omega, rng);
  return p >= 0.0 ? x * scale : scale / x;
}

// ---------------------------------------------------------------------------
// Matrix GIG eta_{p,A,B}: density proportional to
// det X^{p-(r+1)/2} e^{-(tr A X + tr B X^{-1})/2}.

struct MatrixGIGSpec {
  int dim = 1;
  double p = 0.0;
  RMat a;
  RMat b;

  void validate() const {
    if (a.rows() != dim || b.rows() != dim) throw PreconditionError("matrix GIG: A and B must be r x r");
    SPDMatrix<double> ca(a), cb(b);
    (void)ca;
    (void)cb;
  }
};

inline double matrix_gig_log_kernel(const RMat& x, double p, const RMat& a, const RMat& b) {
  Eigen::LLT<RMat> llt(x);
  if (llt.info() != Eigen::Success) return -INFINITY;
  const RMat l = llt.matrixL();
  double ldet = 0.0;
  for (int i = 0; i < x.rows(); ++i) ldet += 2.0 * std::log(l(i, i));
  const double r = static_cast<double>(x.rows());
  const double tra = (a.cwiseProduct(x)).sum();
  const double trb = (b.cwiseProduct(llt.solve(identity<double>(x.rows())))).sum();
  return (p - 0.5 * (r + 1.0)) * ldet - 0.5 * (tra + trb);
}

struct McmcOptions {
  std::size_t burn_in = 4000;
  std::size_t thinning = 1;
  std::size_t samples = 20000;
  double proposal_scale = 0.5;  // initial per-coordinate step
  double target_acceptance = 0.3;
  bool precondition = true;
};

struct GigChain {
  std::vector<RMat> samples;
  double acceptance = 0.0;
  double ess = 0.0;  // of the trace functional
};

// Effective sample size of a scalar series from batch means.
inline double effective_sample_size(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 16) return static_cast<double>(n);
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= (n - 1);
  if (var <= 0.0) return static_cast<double>(n);
  const std::size_t bs = static_cast<std::size_t>(std::sqrt(double(n)));
  const std::size_t nb = n / bs;
  double bvar = 0.0;
  for (std::size_t k = 0; k < nb; ++k) {
    double m = 0.0;
    for (std::size_t i = 0; i < bs; ++i) m += x[k * bs + i];
    m /= bs;
    bvar += (m - mean) * (m - mean);
  }
  bvar = bvar / (nb - 1) * bs;  // estimate of the asymptotic variance
  return std::min<double>(n, n * var / bvar);
}

namespace detail {

// Cholesky coordinates theta = (log L_ii, L_ij for i > j), packed row by row.
inline RMat chol_from_theta(const std::vector<double>& th, int r) {
  RMat l = RMat::Zero(r, r);
  std::size_t k = 0;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j <= i; ++j) l(i, j) = i == j ? std::exp(th[k++]) : th[k++];
  return l;
}

inline double theta_log_target(const std::vector<double>& th, int r, double p, const RMat& a, const RMat& b) {
  const RMat l = chol_from_theta(th, r);
  const RMat x = l * l.transpose();
  // dX = 2^r prod L_ii^{r-i} dL (0-based i) and dL_ii = L_ii d log L_ii
  double jac = 0.0;
  std::size_t k = 0;
  for (int i = 0; i < r; ++i)
    for (int j = 0; j <= i; ++j, ++k)
      if (i == j) jac += (r - i + 1) * th[k];
  double ldet = 0.0;
  for (int i = 0; i < r; ++i) ldet += 2.0 * std::log(l(i, i));
  RMat linv = l.triangularView<Eigen::Lower>().solve(identity<double>(r));
  const double tra = (a.cwiseProduct(x)).sum();
  const double trb = (b.cwiseProduct(linv.transpose() * linv)).sum();
  return (p - 0.5 * (r + 1.0)) * ldet - 0.5 * (tra + trb) + jac;
}

}  // namespace detail

// Per-coordinate scale used to precondition X = D Y D.
inline RVec gig_precondition_scale(const MatrixGIGSpec& spec) {
  RVec d(spec.dim);
  for (int i = 0; i < spec.dim; ++i) {
    // mode of the scalar kernel x^{p-1} e^{-(a x + b/x)/2} built from the diagonals
    const double q = spec.p - 1.0, a = spec.a(i, i), b = spec.b(i, i);
    d[i] = std::sqrt((q + std::sqrt(q * q + a * b)) / a);
  }
  return d;
}

// Metropolis-Hastings on the Cholesky factor with adaptive per-coordinate
// random-walk steps (adapted during burn-in, then frozen).
inline GigChain sample_matrix_gig(const MatrixGIGSpec& spec, const McmcOptions& opt, RngStream& rng) {
  spec.validate();
  const int r = spec.dim;
  RVec d = opt.precondition ? gig_precondition_scale(spec) : RVec::Ones(r);
  const RMat a = d.asDiagonal() * spec.a * d.asDiagonal();
  const RMat dinv = d.cwiseInverse().asDiagonal();
  const RMat b = dinv * spec.b * dinv;
  const std::size_t nth = static_cast<std::size_t>(r * (r + 1) / 2);
  std::vector<double> th(nth, 0.0), step(nth, opt.proposal_scale);
  std::vector<std::size_t> acc(nth, 0), tries(nth, 0);
  double cur = detail::theta_log_target(th, r, spec.p, a, b);
  GigChain out;
  out.samples.reserve(opt.samples);
  std::vector<double> trace_series;
  trace_series.reserve(opt.samples);
  std::size_t accepted = 0, proposed = 0;
  const std::size_t total = opt.burn_in + opt.samples * opt.thinning;
  for (std::size_t it = 0; it < total; ++it) {
    const bool burning = it < opt.burn_in;
    for (std::size_t k = 0; k < nth; ++k) {
      const double old = th[k];
      th[k] = old + step[k] * rng.normal();
      const double cand = detail::theta_log_target(th, r, spec.p, a, b);
      const bool ok = std::log(rng.uniform()) < cand - cur;
      if (ok) {
        cur = cand;
      } else {
        th[k] = old;
      }
      if (burning) {
        ++tries[k];
        if (ok) ++acc[k];
        if (tries[k] == 50) {
          const double rate = double(acc[k]) / tries[k];
          step[k] *= std::exp(rate - opt.target_acceptance);
          step[k] *= rate > opt.target_acceptance ? 1.1 : 0.9;
          tries[k] = acc[k] = 0;
        }
      } else {
        ++proposed;
        if (ok) ++accepted;
      }
    }
    if (!burning && (it - opt.burn_in + 1) % opt.thinning == 0) {
      const RMat l = detail::chol_from_theta(th, r);
      RMat x = d.asDiagonal() * (l * l.transpose()) * d.asDiagonal();
      trace_series.push_back(x.trace());
      out.samples.push_back(std::move(x));
    }
  }
  out.acceptance = proposed ? double(accepted) / proposed : 0.0;
  out.ess = effective_sample_size(trace_series);
  if (out.ess < 0.01 * out.samples.size()) throw MixingFailure("effective sample size below 10 per 1000");
  return out;
}

// ---------------------------------------------------------------------------
// Eigenvalue density of the beta-Wishart law with parameter 2 mu (the
// invariant law of the P eigenvalue diffusion), unnormalized:
//   prod_{i>j} |p_i - p_j|^beta prod p_i^{beta mu - 1 - beta (r-1)/2} e^{-beta/2 sum p_i}.

struct EigDensitySpec {
  int dim = 1;
  double mu = 1.0;
  int beta = 1;
};

inline double wishart_eig_logdensity(const std::vector<double>& p, const EigDensitySpec& spec) {
  const int r = spec.dim;
  if (static_cast<int>(p.size()) != r) throw DomainError("wrong number of eigenvalues");
  const double beta = spec.beta;
  double s = 0.0;
  for (int i = 0; i < r; ++i) {
    if (!(p[i] > 0.0)) throw DomainError("eigenvalues must be positive");
    if (i && !(p[i] > p[i - 1])) throw DomainError("eigenvalues must be strictly ascending");
    for (int j = 0; j < i; ++j) s += beta * std::log(p[i] - p[j]);
    s += (beta * spec.mu - 1.0 - 0.5 * beta * (r - 1)) * std::log(p[i]) - 0.5 * beta * p[i];
  }
  return s;
}

}  // namespace gldiff
