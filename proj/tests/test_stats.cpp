#include <gtest/gtest.h>

#include <cmath>

#include "gldiff/laws.hpp"
#include "gldiff/stats.hpp"

using namespace gldiff;

namespace {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<RMat> wishart_draws(double dof, int n, RngStream& rng) {
  WishartSpec<double> ws{2, dof, std::nullopt};
  std::vector<RMat> out;
  for (int i = 0; i < n; ++i) out.push_back(sample_wishart(ws, rng).matrix());
  return out;
}

}  // namespace

TEST(MeanSE, Basic) {
  const MeanSE m = mean_se({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(m.mean, 2.5);
  EXPECT_NEAR(m.std_error, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
  EXPECT_THROW(mean_se({1.0}), InsufficientSamples);
  EXPECT_NEAR(correlation({1, 2, 3}, {2, 4, 6.5}), 0.9986, 1e-3);
}

TEST(Kolmogorov, KnownQuantiles) {
  EXPECT_NEAR(kolmogorov_q(1.3581), 0.05, 1e-3);
  EXPECT_NEAR(kolmogorov_q(1.6276), 0.01, 1e-3);
  EXPECT_EQ(kolmogorov_q(0.1), 1.0);
}

TEST(KS, CalibratedUnderTheNull) {
  // rejection rate at level 0.05 over repeated normal samples
  RngStream rng(1, 0);
  int rejections = 0;
  const int reps = 400;
  for (int k = 0; k < reps; ++k) {
    std::vector<double> x(200);
    for (auto& v : x) v = rng.normal();
    if (ks_one_sample(x, normal_cdf).p_value < 0.05) ++rejections;
  }
  EXPECT_LT(rejections, 0.05 * reps + 3.0 * std::sqrt(reps * 0.05 * 0.95));
  EXPECT_GT(rejections, 0.05 * reps - 3.0 * std::sqrt(reps * 0.05 * 0.95));
}

TEST(KS, DetectsShift) {
  RngStream rng(2, 0);
  std::vector<double> a(2000), b(2000);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal() + 0.2;
  EXPECT_LT(ks_two_sample(a, b).p_value, 1e-4);
  EXPECT_LT(ks_one_sample(b, normal_cdf).p_value, 1e-4);
  EXPECT_THROW(ks_two_sample({}, b), InsufficientSamples);
}

TEST(Energy, AcceptsSameLaw) {
  RngStream rng(3, 0);
  const auto fs = spd_functionals(2, 7);
  const auto a = apply_functionals(wishart_draws(6.0, 500, rng), fs);
  const auto b = apply_functionals(wishart_draws(6.0, 500, rng), fs);
  EXPECT_GT(energy_test(a, b, 200, 1000, rng).p_value, 0.01);
}

TEST(Energy, RejectsShiftedWishart) {
  RngStream rng(4, 0);
  const auto fs = spd_functionals(2, 7);
  const auto a = apply_functionals(wishart_draws(6.0, 1000, rng), fs);
  const auto b = apply_functionals(wishart_draws(7.0, 1000, rng), fs);
  EXPECT_LT(energy_test(a, b, 200, 1000, rng).p_value, 0.01);
}

TEST(Energy, SymmetricInGroups) {
  RngStream rng(5, 0);
  const auto fs = spd_functionals(2, 7);
  const auto a = apply_functionals(wishart_draws(6.0, 100, rng), fs);
  const auto b = apply_functionals(wishart_draws(6.5, 150, rng), fs);
  RngStream r1(9, 0), r2(9, 0);
  EXPECT_NEAR(energy_test(a, b, 50, 1000, r1).statistic, energy_test(b, a, 50, 1000, r2).statistic, 1e-6);
}

TEST(Energy, CapAndMinimumSize) {
  RngStream rng(6, 0);
  std::vector<std::vector<double>> a(50, {0.0}), b(1, {1.0});
  EXPECT_THROW(energy_test(a, b, 10, 100, rng), InsufficientSamples);
  for (std::size_t i = 0; i < a.size(); ++i) a[i][0] = rng.normal();
  std::vector<std::vector<double>> c(a.begin(), a.begin() + 10);
  RngStream r1(1, 0), r2(1, 0);
  std::vector<std::vector<double>> d(a.begin() + 10, a.end());
  EXPECT_DOUBLE_EQ(energy_test(c, d, 20, 10, r1).statistic,
                   energy_test(c, std::vector<std::vector<double>>(d.begin(), d.begin() + 10), 20, 10, r2).statistic);
}

TEST(Functionals, NamesAndValues) {
  const auto fs = spd_functionals(2, 7);
  ASSERT_EQ(fs.size(), 6u);
  RMat s = RMat::Identity(2, 2) * 2.0;
  for (const auto& f : fs) {
    if (f.name == "log_det") EXPECT_NEAR(f.apply(s), std::log(4.0), 1e-14);
    if (f.name == "log_probe") EXPECT_NEAR(f.apply(s), std::log(2.0), 1e-14);
  }
  EXPECT_EQ(spd_functionals(1, 7).size(), 2u);
  const auto mf = matrix_functionals(3, 7);
  EXPECT_EQ(mf.size(), 5u);
  RMat m = RMat::Identity(3, 3);
  EXPECT_NEAR(mf[0].apply(m), 0.0, 1e-15);
  // fixed probes
  EXPECT_EQ(matrix_functionals(3, 7)[4].apply(m + RMat::Ones(3, 3)), mf[4].apply(m + RMat::Ones(3, 3)));
}
