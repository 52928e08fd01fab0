#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace ltfuse;
using fixtures::unit;

namespace {

const auto E = Group::Experimental;
const auto O = Group::Observational;

SimConfig categorical_config(std::uint64_t seed, double c, std::size_t n = 600) {
  SimConfig cfg;
  cfg.n_e = cfg.n_o = n;
  cfg.seed = seed;
  cfg.confounding = c;
  cfg.covariates.push_back({"region", CovariateType::Categorical, 3, {0.0, 0.4, -0.2}, {0.0, 0.3, 0.1}, 0.3});
  return cfg;
}

Lemma2Options permutation(std::size_t b, std::uint64_t seed, unsigned threads = 1) {
  Lemma2Options o;
  o.method = DiagnosticMethod::Permutation;
  o.n_permutations = b;
  o.seed = seed;
  o.threads = threads;
  return o;
}

// Same sample with the categorical levels of covariate 0 renamed by `map`.
CombinedSample relabel(const CombinedSample& s, const std::vector<double>& map) {
  auto units = s.units();
  for (auto& u : units) u.covariates[0] = map[static_cast<std::size_t>(u.covariates[0])];
  return CombinedSample::create(s.schema(), units);
}

} // namespace

TEST(Lemma2Regression, ReportShape) {
  const auto s = simulate_linear(categorical_config(1, 0.0)).sample;
  const auto r = test_lemma2(s);
  EXPECT_EQ(r.name, "lemma2");
  EXPECT_EQ(r.df, 2u);
  EXPECT_GE(r.statistic, 0.0);
  EXPECT_GE(r.p_value, 0.0);
  EXPECT_LE(r.p_value, 1.0);
  EXPECT_NE(r.note.find("does not identify which"), std::string::npos);
}

TEST(Lemma2Regression, DetectsConfounding) {
  const auto s = simulate_linear(categorical_config(2, 2.0, 5000)).sample;
  EXPECT_LT(test_lemma2(s).p_value, 1e-6);
}

TEST(Lemma2Permutation, DeterministicAcrossThreadCounts) {
  const auto s = simulate_linear(categorical_config(3, 0.5)).sample;
  const auto a = test_lemma2(s, permutation(199, 7, 1));
  const auto b = test_lemma2(s, permutation(199, 7, 3));
  EXPECT_EQ(a.p_value, b.p_value);
  EXPECT_EQ(a.statistic, b.statistic);
  EXPECT_EQ(a.strata_used, 6u);
  const double scaled = a.p_value * 200.0;
  EXPECT_NEAR(scaled, std::round(scaled), 1e-9);
  EXPECT_GE(a.p_value, 1.0 / 200.0);
  EXPECT_LE(a.p_value, 1.0);
}

TEST(Lemma2Permutation, SmallestPValueIsOneOverBPlusOne) {
  const auto s = simulate_linear(categorical_config(4, 3.0, 3000)).sample;
  EXPECT_DOUBLE_EQ(test_lemma2(s, permutation(19, 1)).p_value, 1.0 / 20.0);
}

TEST(Lemma2Permutation, InvariantToCategoryLabels) {
  const auto s = simulate_linear(categorical_config(5, 1.0)).sample;
  const auto t = relabel(s, {2, 0, 1});
  const auto a = test_lemma2(s, permutation(99, 11));
  const auto b = test_lemma2(t, permutation(99, 11));
  EXPECT_EQ(a.statistic, b.statistic);
  EXPECT_EQ(a.p_value, b.p_value);
}

TEST(Lemma2, IdenticalGroupsGiveZeroGap) {
  const auto base = simulate_linear(categorical_config(6, 0.0, 200)).sample;
  std::vector<Unit> units;
  for (const auto& u : base.units()) {
    if (u.group != E) continue;
    units.push_back(u);
    Unit copy = u;
    copy.group = O;
    copy.primary = u.secondary;
    units.push_back(copy);
  }
  const auto s = CombinedSample::create(base.schema(), units);
  const auto p = test_lemma2(s, permutation(49, 2));
  EXPECT_EQ(p.statistic, 0.0);
  EXPECT_EQ(p.p_value, 1.0);
  const auto r = test_lemma2(s);
  EXPECT_NEAR(r.statistic, 0.0, 1e-12);
  EXPECT_GT(r.p_value, 0.999);
}

TEST(Lemma2Permutation, SingleGroupStrata) {
  Schema schema;
  schema.covariates.push_back({"c", CovariateType::Categorical, {"a", "b"}});
  std::vector<Unit> units;
  for (int i = 0; i < 8; ++i) {
    units.push_back(unit(E, i % 2, i, {}, {0}));
    units.push_back(unit(O, i % 2, i + 0.5, 0.0, {0}));
  }
  units.push_back(unit(O, 1, 3, 0.0, {1}));
  const auto s = CombinedSample::create(schema, units);
  const auto r = test_lemma2(s, permutation(9, 1));
  EXPECT_EQ(r.strata_used, 2u);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_EQ(r.warnings[0].code, "stratum_dropped");

  std::vector<Unit> split;
  for (int i = 0; i < 4; ++i) {
    split.push_back(unit(E, i % 2, i, {}, {0}));
    split.push_back(unit(O, i % 2, i, 0.0, {1}));
  }
  EXPECT_THROW(test_lemma2(CombinedSample::create(schema, split), permutation(9, 1)), EstimationError);
}

TEST(Lemma2Permutation, CoarsensContinuousCovariates) {
  SimConfig cfg = categorical_config(8, 0.0, 400);
  cfg.covariates.push_back({"age", CovariateType::Continuous, 1, {0.2}, {0.1}, 0.0});
  const auto s = simulate_linear(cfg).sample;
  auto o = permutation(19, 3);
  o.max_cells = 12;
  // 3 regions leave floor(12 / 3) = 4 age bins, so at most 2 * 12 strata.
  const auto r = test_lemma2(s, o);
  EXPECT_LE(r.strata_used, 24u);
  EXPECT_GT(r.strata_used, 12u);
}

TEST(SecondaryGap, Fields) {
  const auto s = simulate_linear(categorical_config(9, 2.0, 4000)).sample;
  const auto g = compare_secondary_effects(s);
  EXPECT_DOUBLE_EQ(g.difference, g.tau_s_e - g.tau_s_o);
  EXPECT_GT(g.se, 0.0);
  EXPECT_DOUBLE_EQ(g.z, g.difference / g.se);
  EXPECT_LT(g.p_value, 1e-6);
  EXPECT_LT(g.tau_s_e, g.tau_s_o);
}

TEST(Surrogacy, PerfectSurrogateAndDirectChannel) {
  SimConfig cfg = categorical_config(10, 1.0, 3000);
  cfg.tau_p = cfg.delta * cfg.tau_s;
  const auto clean = surrogacy_check(simulate_linear(cfg).sample);
  ASSERT_TRUE(clean.coefficient && clean.se);
  EXPECT_LT(std::fabs(*clean.coefficient), 4.0 * *clean.se);
  cfg.tau_p = 0.5;
  const auto direct = surrogacy_check(simulate_linear(cfg).sample);
  EXPECT_LT(direct.p_value, 1e-6);
  EXPECT_NEAR(*direct.coefficient, 0.5 - cfg.delta * cfg.tau_s, 5.0 * *direct.se);
}
