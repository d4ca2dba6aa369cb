#include <gtest/gtest.h>

#include <sstream>

#include "gldiff/config.hpp"
#include "gldiff/report.hpp"
#include "gldiff/suites.hpp"

using namespace gldiff;

namespace {

Config parse(const std::string& text) {
  std::istringstream is(text);
  return Config::parse(is);
}

std::string config_error(const std::string& text) {
  try {
    make_experiment(parse(text));
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
  Config c = parse("# comment\nsuite = mellin\n\ndim = 3   # trailing\ntimes = 0.25, 0.5\n");
  EXPECT_EQ(c.text("suite"), "mellin");
  EXPECT_EQ(c.integer("dim"), 3);
  EXPECT_EQ(c.list("times"), (std::vector<double>{0.25, 0.5}));
  EXPECT_EQ(c.real("mu"), 3.0);
  EXPECT_EQ(c.values().size(), config_schema().size());
}

TEST(Config, RejectsMalformedInput) {
  EXPECT_THROW(parse("dim 3\n"), ConfigError);
  EXPECT_THROW(parse("dim = 3\ndim = 4\n"), ConfigError);
  EXPECT_THROW(parse("colour = red\n"), ConfigError);
  EXPECT_THROW(parse("dim = 2.5\n"), ConfigError);
  EXPECT_THROW(parse("mu = fast\n"), ConfigError);
  EXPECT_THROW(parse("times = 1,,2\n"), ConfigError);
  try {
    parse("suite = mellin\nalpha = x\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2: alpha"), std::string::npos) << e.what();
  }
}

TEST(Config, ExperimentValidation) {
  EXPECT_EQ(config_error("suite = mellin\n"), "");
  EXPECT_NE(config_error("suite = nonsense\n").find("valid: dufresne"), std::string::npos);
  EXPECT_NE(config_error("suite = mellin\ndim = 0\n"), "");
  EXPECT_NE(config_error("suite = mellin\nalpha = 1.5\n"), "");
  EXPECT_NE(config_error("suite = mellin\ntimes = 1, 0.5\n"), "");
  EXPECT_NE(config_error("suite = mellin\njoint = 1\n"), "");
  EXPECT_NE(config_error("suite = mellin\npaths = -3\n"), "");
  EXPECT_NE(config_error("suite = mellin\nseed = -1\n"), "");
  EXPECT_NE(config_error("suite = dufresne\ndim = 4\nmu = 1\n").find("2 mu > r - 1"), std::string::npos);
  EXPECT_NE(config_error("suite = z-flip\ndim = 3\nmu = 0.5\n"), "");
  EXPECT_NE(config_error("suite = process-dufresne\ntimes = 0.0001\n"), "");
  EXPECT_NE(config_error("suite = scaling-x\nc_ladder = 4, 2\n"), "");
}

TEST(Catalogue, ThirteenDistinctSuites) {
  const auto& cat = suite_catalogue();
  ASSERT_EQ(cat.size(), 13u);
  for (const auto& s : cat) {
    EXPECT_TRUE(known_suite(s.name));
    EXPECT_FALSE(s.description.empty());
  }
  EXPECT_FALSE(known_suite("kappa"));
}

TEST(Suites, MellinPasses) {
  const auto e = make_experiment(parse("suite = mellin\n"));
  const auto rep = run_suite(e);
  EXPECT_TRUE(rep.passed());
  ASSERT_NE(rep.metric("max_abs_residual"), nullptr);
  EXPECT_LT(rep.metric("max_abs_residual")->value, 1e-12);
}

TEST(Suites, ReportIsReproducible) {
  const auto e = make_experiment(parse("suite = mellin\nseed = 5\ncount = 200\n"));
  const std::string a = report_json(run_suite(e)).dump(), b = report_json(run_suite(e)).dump();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.find("runtime"), std::string::npos);
  const auto e2 = make_experiment(parse("suite = mellin\nseed = 6\ncount = 200\n"));
  EXPECT_NE(report_json(run_suite(e2)).dump(), a);
}

TEST(Suites, BesselPdeScalarOnly) {
  const auto e = make_experiment(parse("suite = bessel-pde\ndim = 1\nmu = 1.5\n"));
  const auto rep = run_suite(e);
  EXPECT_TRUE(rep.passed());
  EXPECT_EQ(rep.metrics.size(), 4u);
}

TEST(Suites, ScalarDufresne) {
  // r = 1: A_inf = 1 / (2 Gamma(mu))
  const auto e = make_experiment(parse("suite = dufresne\ndim = 1\nmu = 2.5\npaths = 600\ndt = 0.005\n"));
  const auto rep = run_suite(e);
  EXPECT_TRUE(rep.passed());
  ASSERT_EQ(rep.tests.size(), 1u);
  EXPECT_GT(rep.tests[0].energy.p_value, 0.01);
  EXPECT_NE(rep.metric("ks_inverse_gamma_p"), nullptr);
}

TEST(TwoSample, RejectsDifferentLaws) {
  RngStream rng(3, 0);
  WishartSpec<double> w6{2, 6.0, std::nullopt}, w8{2, 8.0, std::nullopt};
  std::vector<RMat> a, b;
  for (int i = 0; i < 600; ++i) {
    a.push_back(sample_wishart(w6, rng).matrix());
    b.push_back(sample_wishart(w8, rng).matrix());
  }
  TestOptions opt;
  const auto rep = two_sample_test(a, b, spd_functionals(2, 7), opt, rng);
  EXPECT_FALSE(rep.passed());
  EXPECT_TRUE(rep.tests[0].rejected);
  EXPECT_LT(rep.tests[0].ks_min_p_bonferroni, 0.01);
  std::vector<RMat> small(a.begin(), a.begin() + 10);
  EXPECT_THROW(two_sample_test(small, b, spd_functionals(2, 7), opt, rng), InsufficientSamples);
}

TEST(Report, JsonAndCsvShapes) {
  VerificationReport rep;
  rep.identity = "demo";
  rep.seed = 4;
  rep.metrics.push_back(below_metric("x", 0.5, 1.0));
  rep.metrics.push_back({"inf", INFINITY, 0.0, 0.0, 0.0, true, false});
  rep.samples.push_back({"draws", {1.0, 2.0, 3.0}});
  const Json j = report_json(rep);
  EXPECT_EQ(j["identity"], "demo");
  EXPECT_EQ(j["passed"], true);
  EXPECT_TRUE(j["metrics"][1]["value"].is_string());
  std::ostringstream summary, dump, hist;
  write_summary_csv(summary, rep);
  write_sample_dump_csv(dump, rep);
  write_histogram_csv(hist, rep);
  EXPECT_NE(summary.str().find("x"), std::string::npos);
  EXPECT_EQ(dump.str().rfind("series,index,value\n", 0), 0u);
  EXPECT_NE(dump.str().find("draws,2,3"), std::string::npos);
  EXPECT_FALSE(hist.str().empty());
}
