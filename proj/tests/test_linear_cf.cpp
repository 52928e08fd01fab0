#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace ltfuse;
using fixtures::unit;

namespace {

const auto E = Group::Experimental;
const auto O = Group::Observational;

// Normal equations solved by Gauss-Jordan elimination in long double.
std::vector<long double> normal_equations(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  const std::size_t k = x[0].size();
  std::vector<std::vector<long double>> a(k, std::vector<long double>(k + 1, 0.0L));
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t r = 0; r < k; ++r) {
      for (std::size_t c = 0; c < k; ++c) a[r][c] += static_cast<long double>(x[i][r]) * x[i][c];
      a[r][k] += static_cast<long double>(x[i][r]) * y[i];
    }
  for (std::size_t p = 0; p < k; ++p) {
    std::size_t best = p;
    for (std::size_t r = p + 1; r < k; ++r)
      if (std::fabs(a[r][p]) > std::fabs(a[best][p])) best = r;
    std::swap(a[p], a[best]);
    for (std::size_t r = 0; r < k; ++r) {
      if (r == p) continue;
      const long double f = a[r][p] / a[p][p];
      for (std::size_t c = p; c <= k; ++c) a[r][c] -= f * a[p][c];
    }
  }
  std::vector<long double> b(k);
  for (std::size_t r = 0; r < k; ++r) b[r] = a[r][k] / a[r][r];
  return b;
}

SimConfig config_with_covariates(std::uint64_t seed, double c = 1.0) {
  SimConfig cfg;
  cfg.n_e = 800;
  cfg.n_o = 900;
  cfg.seed = seed;
  cfg.confounding = c;
  cfg.covariates.push_back({"x1", CovariateType::Continuous, 1, {0.4}, {-0.3}, 0.5});
  cfg.covariates.push_back({"x2", CovariateType::Categorical, 3, {0.0, 0.2, -0.1}, {0.0, 0.5, 0.3}, 0.2});
  return cfg;
}

} // namespace

TEST(Ols, MatchesNormalEquationsAndSandwich) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  const int n = 200;
  Design d;
  d.names = {"(intercept)", "a", "b"};
  d.x.resize(n, 3);
  Eigen::VectorXd y(n);
  std::vector<std::vector<double>> rows;
  std::vector<double> ys;
  for (int i = 0; i < n; ++i) {
    const double a = z(rng), b = z(rng);
    d.x.row(i) << 1.0, a, b;
    y[i] = 1.0 + 2.0 * a - b + (1.0 + std::fabs(a)) * z(rng);
    rows.push_back({1.0, a, b});
    ys.push_back(y[i]);
  }
  const auto fit = ols(y, d);
  const auto oracle = normal_equations(rows, ys);
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(fit.coefficients[j], static_cast<double>(oracle[j]), 1e-10);

  // HC1: (X'X)^-1 (sum e_i^2 x_i x_i') (X'X)^-1 * n / (n - k)
  const Eigen::MatrixXd xtx_inv = (d.x.transpose() * d.x).inverse();
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(3, 3);
  for (int i = 0; i < n; ++i) {
    const double e = y[i] - d.x.row(i).dot(fit.coefficients);
    meat += e * e * d.x.row(i).transpose() * d.x.row(i);
  }
  const Eigen::MatrixXd v = xtx_inv * meat * xtx_inv * (n / (n - 3.0));
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(fit.robust_se[j], std::sqrt(v(j, j)), 1e-10);
  EXPECT_NEAR(fit.se("a"), fit.robust_se[1], 0.0);

  const auto wald = wald_test(fit, {"a"});
  EXPECT_NEAR(wald.statistic, std::pow(fit.coef("a") / fit.se("a"), 2), 1e-9);
  EXPECT_NEAR(wald.p_value, normal_two_sided_p(fit.coef("a") / fit.se("a")), 1e-12);
}

TEST(Ols, RankDeficiencyNamesColumns) {
  Design d;
  d.names = {"(intercept)", "a", "a_twice"};
  d.x.resize(5, 3);
  for (int i = 0; i < 5; ++i) d.x.row(i) << 1.0, i, 2.0 * i;
  try {
    ols(Eigen::VectorXd::LinSpaced(5, 0, 1), d);
    FAIL() << "expected a rank error";
  } catch (const EstimationError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("rank-deficient"), std::string::npos);
    EXPECT_NE(msg.find("column(s): a, a_twice"), std::string::npos) << msg;
  }
  Design tiny;
  tiny.names = {"(intercept)", "a"};
  tiny.x.resize(2, 2);
  tiny.x << 1, 0, 1, 1;
  EXPECT_THROW(ols(Eigen::Vector2d(0, 1), tiny), EstimationError);
}

TEST(Design, CategoricalDummiesDropFirstLevel) {
  Schema schema;
  schema.covariates.push_back({"c", CovariateType::Categorical, {"a", "b", "c"}});
  const auto s = CombinedSample::create(schema, {unit(E, 1, 0, {}, {2}), unit(E, 0, 0, {}, {0})});
  const std::vector<std::size_t> rows{0, 1};
  const auto d = build_design(s, rows, {});
  EXPECT_EQ(d.names, (std::vector<std::string>{"(intercept)", "treatment", "c=b", "c=c"}));
  EXPECT_EQ(d.x(0, 2), 0.0);
  EXPECT_EQ(d.x(0, 3), 1.0);
  EXPECT_EQ(d.x(1, 3), 0.0);
}

TEST(LinearControlFunction, ThreeWayIdentity) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto sample = simulate_linear(config_with_covariates(seed)).sample;
    const auto cf = estimate_linear_control_function(sample);
    const auto imp = estimate_linear_imputation(sample);
    const double by_parts = imp.beta_hat + imp.delta_hat * cf.secondary.tau_s_hat;
    EXPECT_NEAR(cf.tau_p_hat, imp.tau_hat, 1e-8);
    EXPECT_NEAR(cf.tau_p_hat, by_parts, 1e-8);
    EXPECT_NEAR(cf.delta_hat, imp.delta_hat, 1e-8);
  }
}

TEST(LinearControlFunction, ResidualsFollowTheExperimentalFit) {
  const auto sample = simulate_linear(config_with_covariates(4)).sample;
  const auto fit = fit_secondary_experimental(sample);
  const auto alpha = residuals_observational(sample, fit);
  const auto rows = sample.indices(O);
  ASSERT_EQ(alpha.size(), rows.size());
  const auto& b = fit.fit.coefficients;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const Unit& u = sample[rows[i]];
    const int level = static_cast<int>(u.covariates[1]);
    const double pred = b[0] + b[1] * u.treatment + b[2] * u.covariates[0] + (level == 1 ? b[3] : 0.0) +
                        (level == 2 ? b[4] : 0.0);
    EXPECT_NEAR(alpha[i], u.secondary - pred, 1e-12);
  }
}

TEST(LinearControlFunction, RecoversTruthAtLargeN) {
  auto cfg = config_with_covariates(17, 1.5);
  cfg.n_e = cfg.n_o = 40000;
  const auto sim = simulate_linear(cfg);
  const auto cf = estimate_linear_control_function(sim.sample);
  EXPECT_NEAR(cf.tau_p_hat, cfg.tau_p, 5 * cf.fit.se("treatment") + 0.01);
  EXPECT_NEAR(cf.delta_hat, cfg.delta, 0.03);
  const double naive = tau_naive_observational(sim.sample, Outcome::Primary);
  EXPECT_GT(naive - cfg.tau_p, 0.5 * sim.truth.naive_bias_p);
}

TEST(LinearControlFunction, NoLatentLoadingLeavesPrimaryUnconfounded) {
  auto cfg = config_with_covariates(23, 2.0);
  cfg.delta = 0.0;
  cfg.n_e = cfg.n_o = 20000;
  const auto sim = simulate_linear(cfg);
  const auto cf = estimate_linear_control_function(sim.sample);
  EXPECT_EQ(sim.truth.naive_bias_p, 0.0);
  EXPECT_GT(sim.truth.naive_bias_s, 0.5);
  EXPECT_NEAR(cf.delta_hat, 0.0, 5 * cf.fit.se("alpha_s"));
}

TEST(ResidualBalance, DifferenceAndWelchSe) {
  const std::vector<double> r{1, 2, 3, 10, 20};
  const std::vector<int> w{0, 0, 0, 1, 1};
  const auto b = residual_balance_diagnostic(r, w);
  EXPECT_DOUBLE_EQ(b.mean_control, 2.0);
  EXPECT_DOUBLE_EQ(b.mean_treated, 15.0);
  EXPECT_DOUBLE_EQ(b.difference, 13.0);
  EXPECT_NEAR(b.robust_se, std::sqrt(1.0 / 3 + 50.0 / 2), 1e-12);
  EXPECT_THROW(residual_balance_diagnostic(r, std::vector<int>{0, 0, 0, 0, 0}), ValidationError);
}

TEST(LinearControlFunction, MissingCellIsValidationError) {
  const auto s = CombinedSample::create(Schema{}, {unit(O, 1, 0, 1), unit(O, 0, 0, 1), unit(E, 1, 0)});
  EXPECT_THROW(estimate_linear_control_function(s), ValidationError);
  EXPECT_THROW(estimate_linear_imputation(s), ValidationError);
}
