#include <gtest/gtest.h>

#include <cmath>

#include "gldiff/bessel.hpp"

using namespace gldiff;

namespace {

RMat diag2(double a, double b) {
  RMat m = RMat::Zero(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

RMat scalar(double v) { return RMat::Constant(1, 1, v); }

}  // namespace

TEST(Macdonald, KnownValuesAndSymmetry) {
  EXPECT_NEAR(macdonald_K(0.5, 1.0), std::sqrt(M_PI / 2.0) * std::exp(-1.0), 1e-12);
  EXPECT_NEAR(macdonald_K(0.5, 1.0), 0.4610685, 1e-7);
  for (double nu : {0.3, 1.7, 4.0}) EXPECT_DOUBLE_EQ(macdonald_K(nu, 1.3), macdonald_K(-nu, 1.3));
  EXPECT_NEAR(macdonald_K(0.0, 1.0), 0.42102443824070834, 1e-12);
}

TEST(Macdonald, Recurrence) {
  const double mu = 1.0, a = 2.0;
  EXPECT_LT(std::abs(macdonald_K(mu - 1, a) - (macdonald_K(mu + 1, a) - 2.0 * mu / a * macdonald_K(mu, a))), 1e-10);
}

TEST(Macdonald, LogScale) {
  // far in the tail K_nu(x) ~ sqrt(pi / 2x) e^{-x}
  const double x = 2000.0;
  EXPECT_TRUE(macdonald_underflows(0.5, x));
  EXPECT_EQ(macdonald_K(0.5, x), 0.0);
  EXPECT_NEAR(log_macdonald_K(0.5, x), 0.5 * std::log(M_PI / (2.0 * x)) - x, 1e-9);
  EXPECT_TRUE(std::isfinite(log_macdonald_K(80.0, 0.01)));
  EXPECT_THROW(macdonald_K(1.0, 0.0), DomainError);
}

TEST(PowerFunction, Examples) {
  EXPECT_NEAR(power_function({1.0, 1.0}, diag2(2, 3)), 12.0, 1e-12);
  RMat y(2, 2);
  y << 2.0, 0.5, 0.5, 1.0;
  EXPECT_NEAR(power_function({0.0, 1.7}, y), std::pow(y.determinant(), 1.7), 1e-12);
  EXPECT_NEAR(power_function({0.4, -2.0, 1.1}, RMat::Identity(3, 3)), 1.0, 1e-15);
  EXPECT_NEAR(log_power_function({1.0, 1.0}, diag2(2, 3)), std::log(12.0), 1e-13);
  RMat bad(2, 2);
  bad << 1, 2, 2, 1;
  EXPECT_THROW(power_function({1.0, 1.0}, bad), DomainError);
}

TEST(KBessel, ScalarReduction) {
  RngStream rng(1, 0);
  BesselQuery q{1, {0.5}, scalar(1.0), scalar(1.0)};
  EXPECT_NEAR(kbessel_matrix(q, rng).log_value, std::log(0.4610685), 1e-7);
  q = BesselQuery{1, {1.3}, scalar(2.0), scalar(0.5)};
  EXPECT_NEAR(kbessel_matrix(q, rng).log_value, 0.65 * std::log(0.25) + log_macdonald_K(1.3, 1.0), 1e-12);
}

TEST(KBessel, ScalarMonteCarloMatchesQuadrature) {
  RngStream rng(2, 0);
  BesselQuery q{1, {1.3}, scalar(2.0), scalar(0.5), BesselMethod::importance_mc, 200000};
  const BesselValue mc = kbessel_matrix(q, rng);
  q.method = BesselMethod::quadrature;
  const double exact = kbessel_matrix(q, rng).log_value;
  EXPECT_LT(std::abs(mc.log_value - exact), 3.0 * mc.std_error + 1e-3);
}

TEST(KBessel, InversionSymmetry) {
  RngStream rng(3, 0);
  BesselQuery neg{2, {-2.0}, RMat::Identity(2, 2), diag2(1, 2), BesselMethod::automatic, 200000};
  BesselQuery pos{2, {2.0}, diag2(1, 2), RMat::Identity(2, 2), BesselMethod::automatic, 200000};
  const BesselValue a = kbessel_matrix(neg, rng), b = kbessel_matrix(pos, rng);
  EXPECT_LT(std::abs(a.log_value - b.log_value), 3.0 * std::hypot(a.std_error, b.std_error));
}

TEST(KBessel, VanishingBLimit) {
  // K_r(s | A, 0) = Gamma_r(s) det(A / 2)^{-s} / 2 for s > (r - 1)/2
  RngStream rng(4, 0);
  const double s = 2.0;
  const RMat a = diag2(1.0, 3.0);
  BesselQuery q{2, {s}, a, 1e-8 * RMat::Identity(2, 2), BesselMethod::automatic, 100000};
  const BesselValue v = kbessel_matrix(q, rng);
  const double exact = std::log(0.5) + log_mvgamma(2, s) - s * std::log((0.5 * a).determinant());
  EXPECT_LT(std::abs(v.log_value - exact), 3.0 * v.std_error + 1e-6);
}

TEST(KBessel, MatrixGigNormalizer) {
  // 2 K_r(p | A, B) normalizes the matrix GIG law: compare with a direct
  // importance estimate of the kernel integral
  RngStream rng(5, 0);
  const double p = 1.5;
  const RMat a = diag2(1.0, 2.0), b = diag2(0.5, 1.0);
  BesselQuery q{2, {p}, a, b, BesselMethod::automatic, 200000};
  const BesselValue k = kbessel_matrix(q, rng);
  // proposal Wishart(n = 2p + 1, scale A^{-1}) and kernel det X^{p - 3/2} e^{-(tr AX + tr BX^{-1})/2}
  WishartSpec<double> ws{2, 2.0 * p + 1.0, SPDMatrix<double>(RMat(a.inverse()))};
  detail::LogMeanExp acc;
  for (int i = 0; i < 200000; ++i) {
    SPDMatrix<double> x = sample_wishart(ws, rng);
    acc.add(matrix_gig_log_kernel(x.matrix(), p, a, b) - wishart_logpdf(x, ws));
  }
  EXPECT_LT(std::abs(std::log(2.0) + k.log_value - acc.log_mean()), 3.0 * std::hypot(k.std_error, acc.rel_error()));
}

TEST(KBessel, Preconditions) {
  RngStream rng(1, 0);
  BesselQuery q{2, {1.0}, RMat::Identity(2, 2), RMat::Identity(2, 2), BesselMethod::quadrature};
  EXPECT_THROW(kbessel_matrix(q, rng), PreconditionError);
  q.method = BesselMethod::automatic;
  q.budget = 100;
  EXPECT_THROW(kbessel_matrix(q, rng), PreconditionError);
}

TEST(Kappa, ScalarMean) {
  RngStream rng(6, 0);
  const RMat one = scalar(1.0);
  KappaEstimate k = kappa_mean(1.0, one, one, 100000, rng);
  const double exact = macdonald_K(2.0, 1.0) / macdonald_K(1.0, 1.0);
  EXPECT_NEAR(gig_mean(1.0, 1.0, 1.0), exact, 1e-12);
  EXPECT_LT(std::abs(k.mean(0, 0) - exact), 3.0 * k.std_error(0, 0));
}

TEST(Kappa, ShiftIdentityAndDiagonal) {
  // kappa_mu(I, A) = 2 mu I + kappa_{-mu}(I, A)
  RngStream rng(7, 0);
  const double mu = 1.5;
  const RMat id = RMat::Identity(2, 2), a = diag2(1.0, 2.0);
  KappaEstimate kp = kappa_mean(mu, id, a, 100000, rng), kn = kappa_mean(-mu, id, a, 100000, rng);
  const RMat resid = kp.mean - kn.mean - 2.0 * mu * id;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      EXPECT_LT(std::abs(resid(i, j)), 3.0 * std::hypot(kp.std_error(i, j), kn.std_error(i, j)))
          << "entry " << i << j;
  EXPECT_LT(std::abs(kp.mean(0, 1)), 3.0 * kp.std_error(0, 1));
}

TEST(Kappa, BesselRatio) {
  // [kappa_mu(L, I)]_11 = K_2((1, mu) | L, I) / K_2((0, mu) | L, I)
  RngStream rng(8, 0);
  const double mu = 1.5;
  const RMat l = diag2(0.7, 2.0), id = RMat::Identity(2, 2);
  KappaEstimate k = kappa_mean(mu, l, id, 100000, rng);
  BesselQuery num{2, {1.0, mu}, l, id, BesselMethod::automatic, 200000};
  BesselQuery den{2, {0.0, mu}, l, id, BesselMethod::automatic, 200000};
  const BesselValue kn = kbessel_matrix(num, rng), kd = kbessel_matrix(den, rng);
  const double ratio = std::exp(kn.log_value - kd.log_value);
  const double se = std::hypot(k.std_error(0, 0), ratio * std::hypot(kn.std_error, kd.std_error));
  EXPECT_LT(std::abs(k.mean(0, 0) - ratio), 3.0 * se);
}

TEST(Kappa, TableInterpolatesItsNodes) {
  RngStream rng(9, 0);
  KappaTable::Options opt;
  opt.log_lo = -2.0;
  opt.log_hi = 2.0;
  opt.points = 5;
  opt.budget = 20000;
  KappaTable t = KappaTable::build(1, 1.5, opt, rng);
  for (double ll : {-2.0, 0.0, 1.0}) {
    RVec lam = RVec::Constant(1, std::exp(ll));
    EXPECT_LT(std::abs(t.kappa11(lam) / gig_mean(1.5, lam[0], 1.0) - 1.0), 0.03) << ll;
  }
  EXPECT_THROW(KappaTable::build(3, 0.5, opt, rng), PreconditionError);
}

TEST(BesselPde, ScalarResidual) {
  RngStream rng(1, 0);
  EXPECT_LT(pde_residual_U(scalar(1.0), 1.5, 0.0, 0, rng).residual, 1e-4);
  EXPECT_LT(pde_residual_U(scalar(3.0), 2.5, 0.0, 0, rng).residual, 1e-4);
}

TEST(BesselPde, BoundaryValue) {
  EXPECT_NEAR(bessel_U_scalar(1e-10, 1.5), 1.0, 1e-4);
  EXPECT_NEAR(bessel_U_scalar(1e-6, 2.0), 1.0, 1e-4);
  // mu = 3/2: U(y) = (1 + sqrt y) e^{-sqrt y}
  for (double y : {0.3, 4.0, 40.0})
    EXPECT_NEAR(bessel_U_scalar(y, 1.5), (1.0 + std::sqrt(y)) * std::exp(-std::sqrt(y)), 1e-12);
}

TEST(BesselPde, MatrixResidual) {
  RngStream rng(10, 0);
  const PdeResidual r = pde_residual_U(RMat::Identity(2, 2), 3.0, 0.0, 100000, rng);
  EXPECT_LT(r.residual, 5e-2);
  EXPECT_THROW(pde_residual_U(RMat::Identity(3, 3), 0.9, 0.0, 1000, rng), PreconditionError);
}

TEST(Mellin, Examples) {
  MellinMultipliers m = mellin_multipliers({1, 2.0, {1.0}});
  EXPECT_DOUBLE_EQ(m.c1, 12.0);
  EXPECT_DOUBLE_EQ(m.c2, 2.0);
  EXPECT_DOUBLE_EQ(m.c3, 8.0);
  EXPECT_DOUBLE_EQ(m.residual, 0.0);
  m = mellin_multipliers({3, 0.7, {0.0, 0.0, 0.0}});
  EXPECT_EQ(m.c1, 0.0);
  EXPECT_EQ(m.c2, 0.0);
  EXPECT_EQ(m.c3, 0.0);
  EXPECT_THROW(mellin_multipliers({2, 1.0, {1.0}}), PreconditionError);
}

TEST(Mellin, RandomIndices) {
  RngStream rng(11, 0);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    MellinIndex idx;
    idx.dim = 1 + static_cast<int>(rng.uniform() * 6);
    idx.mu = 4.0 * rng.normal();
    for (int i = 0; i < idx.dim; ++i) idx.s.push_back(2.0 * rng.normal());
    const MellinMultipliers m = mellin_multipliers(idx);
    worst = std::max(worst, std::abs(m.residual) / (1.0 + std::abs(m.c1)));
  }
  EXPECT_LT(worst, 1e-12);
}
