#include <gtest/gtest.h>

#include <cmath>
#include <complex>

#include "gldiff/matcore.hpp"
#include "gldiff/rng.hpp"

using namespace gldiff;

namespace {

RMat mat2(double a, double b, double c, double d) {
  RMat m(2, 2);
  m << a, b, c, d;
  return m;
}

}  // namespace

TEST(Cholesky, Identity) {
  EXPECT_TRUE(cholesky<double>(RMat(identity<double>(2))).isApprox(identity<double>(2)));
}

TEST(Cholesky, Diagonal) {
  RMat l = cholesky<double>(mat2(4, 0, 0, 9));
  EXPECT_NEAR(l(0, 0), 2.0, 1e-14);
  EXPECT_NEAR(l(1, 1), 3.0, 1e-14);
  EXPECT_EQ(l(0, 1), 0.0);
}

TEST(Cholesky, Reconstructs) {
  const RMat s = mat2(2, 1, 1, 2);
  RMat l = cholesky<double>(s);
  EXPECT_LT((l * l.transpose() - s).norm(), 1e-12);
  EXPECT_GT(l(0, 0), 0.0);
  EXPECT_GT(l(1, 1), 0.0);
}

TEST(Cholesky, RejectsIndefinite) {
  EXPECT_THROW(cholesky<double>(mat2(1, 2, 2, 1)), NotPositiveDefinite);
  EXPECT_THROW(SPDMatrix<double>(mat2(1, 0, 0, 0)), NotPositiveDefinite);
  EXPECT_THROW(SPDMatrix<double>(mat2(1, 0, 0, NAN)), NotPositiveDefinite);
}

TEST(SPDMatrix, SymmetrizesAndInverts) {
  SPDMatrix<double> s(mat2(2, 1 + 1e-14, 1, 2));
  EXPECT_EQ(s.matrix()(0, 1), s.matrix()(1, 0));
  EXPECT_LT((s.inverse() * s.matrix() - identity<double>(2)).norm(), 1e-13);
  EXPECT_NEAR(s.log_det(), std::log(3.0), 1e-13);
}

TEST(SPDMatrix, Complex) {
  using C = std::complex<double>;
  Mat<C> m(2, 2);
  m << C(2, 0), C(0, 1), C(0, -1), C(2, 0);
  SPDMatrix<C> s(m);
  Mat<C> l = s.cholesky();
  EXPECT_LT((l * l.adjoint() - m).norm(), 1e-12);
  EXPECT_NEAR(s.log_det(), std::log(3.0), 1e-13);
}

TEST(SymEigs, Diagonal) {
  auto e = sym_eigs<double>(mat2(3, 0, 0, 1));
  EXPECT_NEAR(e.values[0], 1.0, 1e-14);
  EXPECT_NEAR(e.values[1], 3.0, 1e-14);
  // a permutation of I up to signs
  EXPECT_NEAR(e.vectors.cwiseAbs().sum(), 2.0, 1e-12);
}

TEST(SymEigs, IdentityAndRotation) {
  EXPECT_TRUE(eigenvalues<double>(RMat(identity<double>(3))).isApprox(RVec::Ones(3)));
  const double th = 0.7;
  RMat o = mat2(std::cos(th), -std::sin(th), std::sin(th), std::cos(th));
  RMat s = o * mat2(1, 0, 0, 3) * o.transpose();
  auto e = sym_eigs<double>(s);
  EXPECT_NEAR(e.values[0], 1.0, 1e-12);
  EXPECT_NEAR(e.values[1], 3.0, 1e-12);
  EXPECT_LT((e.vectors * e.values.asDiagonal() * e.vectors.transpose() - s).norm(), 1e-10);
}

TEST(SingularValues, Ascending) {
  RVec s = singular_values<double>(mat2(0, 2, 1, 0));
  EXPECT_NEAR(s[0], 1.0, 1e-14);
  EXPECT_NEAR(s[1], 2.0, 1e-14);
}

TEST(Expm, DiagonalAndNilpotent) {
  RMat e = expm<double>(mat2(1, 0, 0, -1));
  EXPECT_NEAR(e(0, 0), std::exp(1.0), 1e-13);
  EXPECT_NEAR(e(1, 1), std::exp(-1.0), 1e-13);
  RMat n = expm<double>(mat2(0, 1, 0, 0));
  EXPECT_LT((n - mat2(1, 1, 0, 1)).norm(), 1e-14);
  RMat one(1, 1);
  one(0, 0) = 0.3;
  EXPECT_NEAR(expm<double>(one)(0, 0), std::exp(0.3), 1e-15);
}

TEST(BmIncrement, EntryMean) {
  RngStream rng(1, 0);
  const NoiseSpec ns{2, 1, NoiseStructure::isotropic};
  const int n = 1000000;
  double s = 0.0;
  for (int k = 0; k < n; ++k) s += bm_increment<double>(ns, 0.01, rng)(0, 0);
  EXPECT_NEAR(s / n, 0.0, 3e-4);  // 3 sigma: sd 0.1 per draw
}

TEST(BmIncrement, ScalarVariance) {
  RngStream rng(2, 0);
  const NoiseSpec ns{1, 1, NoiseStructure::isotropic};
  const int n = 1000000;
  double s = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = bm_increment<double>(ns, 1.0, rng)(0, 0);
    s += x * x;
  }
  EXPECT_NEAR(s / n, 1.0, 0.01);
}

TEST(BmIncrement, StructuredComplexDiagonal) {
  using C = std::complex<double>;
  RngStream rng(3, 0);
  const NoiseSpec ns{2, 2, NoiseStructure::structured};
  const int n = 200000;
  double diag = 0.0, off = 0.0, imag_diag = 0.0;
  for (int k = 0; k < n; ++k) {
    Mat<C> d = bm_increment<C>(ns, 1.0, rng);
    diag += std::norm(d(0, 0)) + std::norm(d(1, 1));
    off += std::norm(d(0, 1));
    imag_diag += std::abs(d(0, 0).imag());
  }
  EXPECT_NEAR(diag / (2.0 * n), 0.5, 0.01);
  EXPECT_NEAR(off / n, 1.0, 0.02);
  EXPECT_EQ(imag_diag, 0.0);
}

TEST(BmIncrement, IsotropicComplexMeanSquare) {
  using C = std::complex<double>;
  RngStream rng(4, 0);
  const NoiseSpec ns{2, 2, NoiseStructure::isotropic};
  const int n = 100000;
  double ms = 0.0;
  for (int k = 0; k < n; ++k) ms += std::norm(bm_increment<C>(ns, 0.5, rng)(1, 1));
  EXPECT_NEAR(ms / n, 0.5, 0.01);
}

TEST(BmIncrement, RotationInvariantSecondMoments) {
  RngStream rng(5, 0);
  const NoiseSpec ns{2, 1, NoiseStructure::isotropic};
  const double th = 0.4;
  RMat o = mat2(std::cos(th), -std::sin(th), std::sin(th), std::cos(th));
  const int n = 200000;
  RMat m1 = RMat::Zero(2, 2), m2 = RMat::Zero(2, 2);
  for (int k = 0; k < n; ++k) {
    RMat d = bm_increment<double>(ns, 1.0, rng);
    RMat e = o * d * o.transpose();
    m1 += d.cwiseProduct(d);
    m2 += e.cwiseProduct(e);
  }
  // each entry has mean square 1 with standard error sqrt(2/n)
  EXPECT_LT(((m1 - m2) / n).cwiseAbs().maxCoeff(), 5.0 * std::sqrt(4.0 / n));
}

TEST(RngStream, Deterministic) {
  RngStream a(9, 3), b(9, 3), c(9, 4);
  const NoiseSpec ns{3, 1, NoiseStructure::isotropic};
  RMat x = bm_increment<double>(ns, 0.1, a), y = bm_increment<double>(ns, 0.1, b), z = bm_increment<double>(ns, 0.1, c);
  EXPECT_EQ((x - y).norm(), 0.0);
  EXPECT_NE((x - z).norm(), 0.0);
}

TEST(Storage, RowMajorRoundTrip) {
  RMat m = mat2(1, 2, 3, 4);
  double buf[4];
  store(m, buf);
  EXPECT_EQ(buf[1], 2.0);
  EXPECT_EQ(load(buf, 2), m);
}
