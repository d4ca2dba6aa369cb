#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>
#include <cmath>
#include <complex>
#include <type_traits>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace gldiff {

inline constexpr int kMaxDim = 16;

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
template <class S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

using RMat = Mat<double>;
using CMat = Mat<std::complex<double>>;
using RVec = Vec<double>;

template <class S>
inline constexpr bool is_complex_v = !std::is_same_v<S, typename Eigen::NumTraits<S>::Real>;

template <class S>
constexpr int beta_of() { return is_complex_v<S> ? 2 : 1; }

template <class S>
Mat<S> identity(int r) { return Mat<S>::Identity(r, r); }

template <class S>
Mat<S> hermitian_part(const Mat<S>& a) { return (a + a.adjoint()) / 2.0; }

template <class S>
double trace_re(const Mat<S>& a) { return std::real(a.trace()); }

// Symmetric (Hermitian) positive definite matrix, validated at construction.
template <class S>
class SPDMatrix {
 public:
  SPDMatrix() = default;
  explicit SPDMatrix(const Mat<S>& m) : value_(hermitian_part(m)) {
    if (!value_.allFinite()) throw NotPositiveDefinite("non-finite entries");
    Eigen::LLT<Mat<S>> llt(value_);
    const double tol = 1e-12 * std::abs(trace_re(value_));
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("Cholesky failed");
    chol_ = llt.matrixL();
    for (int i = 0; i < dim(); ++i)
      if (std::norm(chol_(i, i)) <= tol || std::real(chol_(i, i)) <= 0.0)
        throw NotPositiveDefinite("pivot below tolerance");
  }

  int dim() const { return static_cast<int>(value_.rows()); }
  const Mat<S>& matrix() const { return value_; }
  const Mat<S>& cholesky() const { return chol_; }
  Mat<S> inverse() const {
    Mat<S> linv = chol_.template triangularView<Eigen::Lower>().solve(identity<S>(dim()));
    return linv.adjoint() * linv;
  }
  double log_det() const {
    double s = 0.0;
    for (int i = 0; i < dim(); ++i) s += 2.0 * std::log(std::real(chol_(i, i)));
    return s;
  }

 private:
  Mat<S> value_;
  Mat<S> chol_;
};

template <class S>
Mat<S> cholesky(const SPDMatrix<S>& s) { return s.cholesky(); }

template <class S>
Mat<S> cholesky(const Mat<S>& m) { return SPDMatrix<S>(m).cholesky(); }

template <class S>
struct EigenDecomposition {
  RVec values;    // ascending
  Mat<S> vectors;  // columns orthonormal
};

template <class S>
EigenDecomposition<S> sym_eigs(const Mat<S>& m) {
  Eigen::SelfAdjointEigenSolver<Mat<S>> es(hermitian_part(m));
  if (es.info() != Eigen::Success) throw ConvergenceFailure("symmetric eigensolver");
  return {es.eigenvalues(), es.eigenvectors()};
}

template <class S>
RVec eigenvalues(const Mat<S>& m) {
  Eigen::SelfAdjointEigenSolver<Mat<S>> es(hermitian_part(m), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw ConvergenceFailure("symmetric eigensolver");
  return es.eigenvalues();
}

// ascending singular values
template <class S>
RVec singular_values(const Mat<S>& m) {
  RVec s = Eigen::JacobiSVD<Mat<S>>(m).singularValues();
  return s.reverse();
}

template <class S>
Mat<S> expm(const Mat<S>& a) {
  if (a.rows() == 1) {
    Mat<S> e(1, 1);
    e(0, 0) = std::exp(a(0, 0));
    return e;
  }
  return a.exp();
}

enum class NoiseStructure { isotropic, structured };

struct NoiseSpec {
  int dim = 1;
  int beta = 1;
  NoiseStructure structure = NoiseStructure::isotropic;
};

// Half of E[dB_ii^2]/h: the Ito correction an Euler step of dM = M dB needs
// to match the exponential map.
inline double ito_correction(const NoiseSpec& spec) {
  if (spec.structure == NoiseStructure::structured) return 0.5 / spec.beta;
  return spec.beta == 1 ? 0.5 : 0.0;
}

template <class S>
Mat<S> bm_increment(const NoiseSpec& spec, double h, RngStream& rng) {
  const int r = spec.dim;
  Mat<S> d(r, r);
  const double sd = std::sqrt(h);
  for (int j = 0; j < r; ++j)
    for (int i = 0; i < r; ++i) {
      if constexpr (is_complex_v<S>) {
        const bool real_diag = spec.structure == NoiseStructure::structured && i == j;
        if (real_diag) {
          d(i, j) = S(sd * std::sqrt(1.0 / spec.beta) * rng.normal(), 0.0);
        } else {
          const double re = rng.normal(), im = rng.normal();
          d(i, j) = S(re, im) * (sd * M_SQRT1_2);
        }
      } else {
        double s = sd;
        if (spec.structure == NoiseStructure::structured && i == j) s *= std::sqrt(1.0 / spec.beta);
        d(i, j) = s * rng.normal();
      }
    }
  return d;
}

// Row-major flat storage helpers for paths.
template <class S>
void store(const Mat<S>& m, S* out) {
  const int r = static_cast<int>(m.rows());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) out[i * r + j] = m(i, j);
}

template <class S>
Mat<S> load(const S* in, int r) {
  Mat<S> m(r, r);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < r; ++j) m(i, j) = in[i * r + j];
  return m;
}

}  // namespace gldiff
