#include <cmath>

#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "ltfuse/json_io.hpp"

using namespace ltfuse;

namespace {

const auto E = Group::Experimental;
const auto O = Group::Observational;

// Composite Simpson rule on [-12, 12] for E[a | W=1] - E[a | W=0], a ~ N(0, s^2), P(W=1|a) = logistic(c a).
double simpson_gap(double c, double s) {
  const int n = 20000;
  const double lo = -12.0, hi = 12.0, h = (hi - lo) / n;
  double p1 = 0, m1 = 0, m0 = 0;
  for (int i = 0; i <= n; ++i) {
    const double z = lo + i * h;
    const double weight = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    const double e = 1.0 / (1.0 + std::exp(-c * s * z));
    p1 += weight * phi * e;
    m1 += weight * phi * s * z * e;
    m0 += weight * phi * s * z * (1.0 - e);
  }
  p1 *= h / 3;
  m1 *= h / 3;
  m0 *= h / 3;
  return m1 / p1 - m0 / (1.0 - p1);
}

SimConfig with_covariates(std::uint64_t seed) {
  SimConfig cfg;
  cfg.seed = seed;
  cfg.covariates.push_back({"age", CovariateType::Continuous, 1, {0.3}, {0.2}, 0.4});
  cfg.covariates.push_back({"region", CovariateType::Categorical, 4, {0, 0.1, 0.2, 0.3}, {0, -0.1, 0.1, 0.2}, -0.2});
  return cfg;
}

} // namespace

TEST(LinearSimulation, DeterministicPerSeed) {
  const auto a = simulate_linear(with_covariates(5)).sample;
  const auto b = simulate_linear(with_covariates(5)).sample;
  const auto c = simulate_linear(with_covariates(6)).sample;
  EXPECT_EQ(a.units(), b.units());
  EXPECT_NE(a.units(), c.units());
  EXPECT_EQ(a.count(E), 1000u);
  EXPECT_EQ(a.count(O), 1000u);
  EXPECT_EQ(a[0].group, E);
  EXPECT_EQ(a[1999].group, O);
  EXPECT_EQ(a.schema().covariates[1].levels, (std::vector<std::string>{"0", "1", "2", "3"}));
}

TEST(LinearSimulation, CategoricalLevelsAreRoughlyEqualInExperiment) {
  auto cfg = with_covariates(2);
  cfg.n_e = 40000;
  const auto s = simulate_linear(cfg).sample;
  std::vector<double> share(4, 0.0);
  for (auto i : s.indices(E)) share[static_cast<std::size_t>(s[i].covariates[1])] += 1.0 / 40000;
  for (double p : share) EXPECT_NEAR(p, 0.25, 0.01);
}

TEST(LinearSimulation, ExperimentIsRandomizedAndObservationalIsConfounded) {
  SimConfig cfg;
  cfg.n_e = cfg.n_o = 100000;
  cfg.confounding = 1.5;
  cfg.experiment_share = 0.3;
  cfg.tau_s = 0.0;
  const auto sim = simulate_linear(cfg);
  const auto m = [&](Group g, int w) {
    double sum = 0, n = 0;
    for (const auto& u : sim.sample.units())
      if (u.group == g && u.treatment == w) {
        sum += u.secondary;
        ++n;
      }
    return std::pair{sum / n, n};
  };
  EXPECT_NEAR(m(E, 1).second / 100000, 0.3, 0.005);
  EXPECT_NEAR(m(E, 1).first - m(E, 0).first, 0.0, 0.03);
  EXPECT_NEAR(m(O, 1).first - m(O, 0).first, sim.truth.naive_bias_s, 0.03);
}

TEST(LatentSelectionGap, MatchesSimpsonRule) {
  for (double c : {0.25, 0.5, 1.0, 2.0, 4.0})
    for (double s : {0.5, 1.0, 2.0}) EXPECT_NEAR(latent_selection_gap(c, s), simpson_gap(c, s), 1e-9) << c << " " << s;
  EXPECT_EQ(latent_selection_gap(0.0, 1.0), 0.0);
  EXPECT_NEAR(latent_selection_gap(-1.0, 1.0), -latent_selection_gap(1.0, 1.0), 1e-12);
}

TEST(SimTruth, Fields) {
  SimConfig cfg;
  cfg.confounding = 0.0;
  const auto t0 = true_tau(cfg);
  EXPECT_EQ(t0.naive_bias_s, 0.0);
  EXPECT_EQ(t0.naive_bias_p, 0.0);
  EXPECT_DOUBLE_EQ(t0.direct_effect, 0.06 - 0.64 * 0.15);
  cfg.confounding = 2.0;
  const auto t2 = true_tau(cfg);
  EXPECT_DOUBLE_EQ(t2.naive_bias_p, 0.64 * t2.naive_bias_s);
  EXPECT_GT(t2.naive_bias_s, true_tau(SimConfig{}).naive_bias_s);
}

TEST(SimConfig, Validation) {
  SimConfig cfg;
  cfg.n_e = 3;
  EXPECT_THROW(simulate_linear(cfg), ValidationError);
  cfg = SimConfig{};
  cfg.experiment_share = 1.0;
  EXPECT_THROW(simulate_linear(cfg), ValidationError);
  cfg = SimConfig{};
  cfg.covariates.push_back({"r", CovariateType::Categorical, 3, {0, 1}, {0, 1, 2}, 0});
  EXPECT_THROW(simulate_linear(cfg), ValidationError);
}

TEST(SimConfig, JsonRoundTrip) {
  const auto cfg = with_covariates(77);
  const auto j = to_json(cfg);
  const auto back = sim_config_from_json(j);
  EXPECT_EQ(to_json(back).dump(), j.dump());
  EXPECT_EQ(simulate_linear(back).sample.units(), simulate_linear(cfg).sample.units());
}

TEST(SimConfig, JsonDefaultsAndErrors) {
  const auto d = sim_config_from_json(Json::parse(R"({"seed": 4})"));
  EXPECT_EQ(d.n_e, 1000u);
  EXPECT_EQ(d.seed, 4u);
  EXPECT_THROW(sim_config_from_json(Json::parse(R"({"n_e": 10})")), ValidationError);
  EXPECT_THROW(sim_config_from_json(Json::parse(R"({"n_E": "ten"})")), ValidationError);
  EXPECT_THROW(sim_config_from_json(Json::parse(R"({"covariates": [{"name": "a", "type": "ordinal"}]})")),
               ValidationError);
  EXPECT_THROW(sim_config_from_json(Json::parse(R"({"covariates": [{"type": "continuous"}]})")), ValidationError);
  const auto cat = sim_config_from_json(Json::parse(R"({"covariates": [{"name": "a", "type": "categorical", "levels": 3}]})"));
  EXPECT_EQ(cat.covariates[0].gamma_s, (std::vector<double>{0, 0, 0}));
}

TEST(DiscreteSimulation, AssumptionsHoldByConstruction) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const DiscreteSizes sizes{2 + seed % 3, 2 + (seed / 3) % 3, 2 + (seed / 9) % 3};
    const auto t = simulate_discrete(seed, sizes, seed % 2 == 0);
    EXPECT_NO_THROW(t.validate());
    EXPECT_TRUE(t.satisfies_assumptions());
    for (double y : t.ys) EXPECT_EQ(y * 4, std::round(y * 4));
    EXPECT_DOUBLE_EQ(true_tau(t), identification_oracle(t).truth);
  }
}

TEST(DiscreteSimulation, DeterministicAndBreakable) {
  const auto a = simulate_discrete(9, {3, 2, 2});
  const auto b = simulate_discrete(9, {3, 2, 2});
  EXPECT_EQ(to_json(a).dump(), to_json(b).dump());
  auto broken = a;
  broken.ys[a.outcome_index(1, 0, 1)] = broken.ys[a.outcome_index(1, 0, 0)];
  EXPECT_FALSE(broken.satisfies_assumptions());
  auto leaky = a;
  leaky.pw1[a.assignment_index(E, 0, 1)] = (leaky.pw1[a.assignment_index(E, 0, 0)] % 3) + 1;
  EXPECT_FALSE(leaky.satisfies_assumptions());
}

TEST(Bootstrap, DeterministicAndCountsFailures) {
  const auto s = simulate_linear(with_covariates(3)).sample;
  auto est = [](const CombinedSample& r) { return estimate_linear_control_function(r).tau_p_hat; };
  const auto a = bootstrap_se(s, 30, 5, 1, est);
  const auto b = bootstrap_se(s, 30, 5, 3, est);
  ASSERT_TRUE(a.se);
  EXPECT_EQ(*a.se, *b.se);
  EXPECT_EQ(a.failed, 0u);
  const auto cf = estimate_linear_control_function(s);
  EXPECT_GT(*a.se, 0.3 * cf.fit.se("treatment"));
  EXPECT_LT(*a.se, 3.0 * cf.fit.se("treatment"));

  int calls = 0;
  const auto f = bootstrap_se(s, 4, 1, 1, [&](const CombinedSample&) -> double {
    if (calls++ % 2) throw EstimationError("x");
    return calls;
  });
  EXPECT_EQ(f.failed, 2u);
  ASSERT_EQ(f.warnings.size(), 1u);
  EXPECT_EQ(f.warnings[0].code, "bootstrap_failures");
}
