#include <algorithm>
#include <random>

#include <gtest/gtest.h>

#include "fixtures.hpp"

using namespace ltfuse;
using fixtures::unit;

namespace {

const auto E = Group::Experimental;
const auto O = Group::Observational;

// Closed form from counts: sum_s P_E(s | w) * mean_O(Y^P | w, s), differenced over w.
double imputation_by_counts(const CombinedSample& s) {
  double tau = 0.0;
  for (int w : {0, 1}) {
    double n_e = 0, n_e_s[2] = {0, 0}, n_o_s[2] = {0, 0}, y_o_s[2] = {0, 0};
    for (const auto& u : s.units()) {
      if (u.treatment != w) continue;
      const int k = static_cast<int>(u.secondary);
      if (u.group == E) {
        ++n_e;
        ++n_e_s[k];
      } else {
        ++n_o_s[k];
        y_o_s[k] += *u.primary;
      }
    }
    double arm = 0.0;
    for (int k : {0, 1})
      if (n_e_s[k] > 0) arm += n_e_s[k] / n_e * (y_o_s[k] / n_o_s[k]);
    tau += w == 1 ? arm : -arm;
  }
  return tau;
}

} // namespace

TEST(BinaryCellMeans, HandFixture) {
  const auto m = binary_cell_means(fixtures::hand_fixture());
  EXPECT_EQ(m.mean(Outcome::Secondary, E, 1), 0.5);
  EXPECT_EQ(m.mean(Outcome::Secondary, E, 0), 0.0);
  EXPECT_EQ(m.mean(Outcome::Primary, O, 1), 0.5);
  EXPECT_EQ(m.mean(Outcome::Primary, O, 0), 0.5);
  EXPECT_FALSE(m.ybar[1][0][0].has_value());
  EXPECT_FALSE(m.ybar[1][0][1].has_value());
  EXPECT_THROW(m.mean(Outcome::Primary, E, 1), ValidationError);
  EXPECT_EQ(m.counts[0][1], 2u);
  EXPECT_EQ(tau_secondary_experimental(m), 0.5);
  EXPECT_EQ(tau_naive_observational(m, Outcome::Primary), 0.0);
  EXPECT_EQ(tau_naive_observational(m, Outcome::Secondary), 0.0);
}

TEST(BinaryCellMeans, ConstantZeroOutcomes) {
  const auto s = CombinedSample::create(fixtures::binary_schema(),
                                        {unit(O, 1, 0, 0), unit(O, 0, 0, 0), unit(E, 1, 0), unit(E, 0, 0)});
  const auto m = binary_cell_means(s);
  for (int w : {0, 1}) {
    EXPECT_EQ(m.mean(Outcome::Secondary, E, w), 0.0);
    EXPECT_EQ(m.mean(Outcome::Secondary, O, w), 0.0);
    EXPECT_EQ(m.mean(Outcome::Primary, O, w), 0.0);
  }
  EXPECT_EQ(estimate_binary_imputation(s).tau_hat, 0.0);
  EXPECT_EQ(estimate_binary_weighting(s).tau_hat, 0.0);
}

TEST(BinaryEstimators, HandFixtureGivesOneHalf) {
  const auto s = fixtures::hand_fixture();
  EXPECT_EQ(estimate_binary_imputation(s).tau_hat, 0.5);
  const auto w = estimate_binary_weighting(s);
  EXPECT_EQ(w.tau_hat, 0.5);
  // lambda_{0,1} = 0 has no experimental counterpart.
  ASSERT_EQ(w.warnings.size(), 1u);
  EXPECT_EQ(w.warnings[0].code, "zero_weight_cell");
}

TEST(BinaryEstimators, IdentityOverRandomSamples) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 300; ++i) {
    const auto s = fixtures::random_binary_sample(rng);
    const double imp = estimate_binary_imputation(s).tau_hat;
    const double wt = estimate_binary_weighting(s).tau_hat;
    EXPECT_NEAR(imp, wt, 1e-12);
    EXPECT_NEAR(imp, imputation_by_counts(s), 1e-12);
    EXPECT_GE(imp, -1.0);
    EXPECT_LE(imp, 1.0);
  }
}

TEST(BinaryEstimators, UnitOrderDoesNotMatter) {
  std::mt19937_64 rng(5);
  const auto s = fixtures::random_binary_sample(rng);
  auto units = s.units();
  std::shuffle(units.begin(), units.end(), rng);
  const auto t = CombinedSample::create(s.schema(), units);
  EXPECT_NEAR(estimate_binary_imputation(s).tau_hat, estimate_binary_imputation(t).tau_hat, 1e-15);
  EXPECT_NEAR(estimate_binary_weighting(s).tau_hat, estimate_binary_weighting(t).tau_hat, 1e-15);
}

TEST(BinaryEstimators, MatchingFrequenciesReduceToNaive) {
  // Same (W, S) frequencies in both groups: every lambda is 1.
  const auto s = CombinedSample::create(
      fixtures::binary_schema(),
      {unit(O, 1, 1, 1), unit(O, 1, 0, 1), unit(O, 1, 0, 0), unit(O, 0, 1, 0), unit(O, 0, 0, 1), unit(O, 0, 0, 0),
       unit(E, 1, 1), unit(E, 1, 0), unit(E, 1, 0), unit(E, 0, 1), unit(E, 0, 0), unit(E, 0, 0)});
  const double naive = tau_naive_observational(binary_cell_means(s), Outcome::Primary);
  EXPECT_NEAR(estimate_binary_imputation(s).tau_hat, naive, 1e-15);
  EXPECT_NEAR(estimate_binary_weighting(s).tau_hat, naive, 1e-15);
}

TEST(BinaryEstimators, EmptyObservationalCellIsNamed) {
  // E has (w=0, s=1) but O does not.
  const auto s = CombinedSample::create(fixtures::binary_schema(),
                                        {unit(O, 1, 1, 1), unit(O, 1, 0, 0), unit(O, 0, 0, 0), unit(E, 1, 1),
                                         unit(E, 0, 1)});
  try {
    estimate_binary_imputation(s);
    FAIL() << "expected an estimation error";
  } catch (const EstimationError& e) {
    EXPECT_NE(std::string(e.what()).find("w=0, s=1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(estimate_binary_weighting(s), EstimationError);
}

TEST(BinaryEstimators, ZeroDenominatorWithPositiveNumeratorFails) {
  // p_O(S=1 | w=1) = 0 while p_E(S=1 | w=1) > 0.
  const auto s = CombinedSample::create(fixtures::binary_schema(),
                                        {unit(O, 1, 0, 1), unit(O, 0, 0, 0), unit(O, 0, 1, 1), unit(E, 1, 1),
                                         unit(E, 0, 0)});
  EXPECT_THROW(estimate_binary_weighting(s), EstimationError);
}

TEST(BinaryEstimators, RejectsInvalidInput) {
  auto schema = fixtures::binary_schema();
  EXPECT_THROW(estimate_binary_imputation(CombinedSample::create(
                   schema, {unit(O, 1, 0.5, 1), unit(O, 0, 0, 0), unit(E, 1, 1), unit(E, 0, 0)})),
               ValidationError);
  EXPECT_THROW(estimate_binary_imputation(CombinedSample::create(
                   schema, {unit(O, 1, 1, 2), unit(O, 0, 0, 0), unit(E, 1, 1), unit(E, 0, 0)})),
               ValidationError);
  // Empty E0 cell.
  EXPECT_THROW(estimate_binary_imputation(
                   CombinedSample::create(schema, {unit(O, 1, 1, 1), unit(O, 0, 0, 0), unit(E, 1, 1)})),
               ValidationError);
  Schema with_x = schema;
  with_x.covariates.push_back({"x", CovariateType::Continuous, {}});
  EXPECT_THROW(estimate_binary_imputation(CombinedSample::create(
                   with_x, {unit(O, 1, 1, 1, {0}), unit(O, 0, 0, 0, {0}), unit(E, 1, 1, {}, {0}), unit(E, 0, 0, {}, {0})})),
               ValidationError);
}
