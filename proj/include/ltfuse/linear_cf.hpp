#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "ltfuse/binary_exact.hpp"
#include "ltfuse/ols.hpp"

namespace ltfuse {

// Regression of an outcome on (1, W, X) within one group.
inline OlsFit regress_within_group(const CombinedSample& sample, Group g, Outcome outcome) {
  const auto rows = sample.indices(g);
  if (outcome == Outcome::Primary && g == Group::Experimental)
    throw ValidationError("the primary outcome is not observed in the experimental group");
  const Design d = build_design(sample, rows, {});
  return ols(outcome == Outcome::Primary ? gather_primary(sample, rows) : gather_secondary(sample, rows), d);
}

struct SecondaryModelFit {
  double tau_s_hat = 0.0;
  double intercept = 0.0;
  Eigen::VectorXd gamma_s_hat; // aligned to covariate_column_names()
  OlsFit fit;
};

inline SecondaryModelFit fit_secondary_experimental(const CombinedSample& sample) {
  SecondaryModelFit out;
  out.fit = regress_within_group(sample, Group::Experimental, Outcome::Secondary);
  out.intercept = out.fit.coefficients[0];
  out.tau_s_hat = out.fit.coefficients[1];
  out.gamma_s_hat = out.fit.coefficients.tail(out.fit.coefficients.size() - 2);
  return out;
}

// alpha_i = Y^S_i - W_i tau^S - X_i' gamma^S - intercept for every observational unit, in sample order.
inline std::vector<double> residuals_observational(const CombinedSample& sample, const SecondaryModelFit& fit) {
  const auto rows = sample.indices(Group::Observational);
  const Design d = build_design(sample, rows, {});
  if (d.x.cols() != fit.gamma_s_hat.size() + 2)
    throw ValidationError("secondary-outcome fit does not match the observational covariate schema");
  std::vector<double> alpha(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const double xg = d.x.row(r).tail(fit.gamma_s_hat.size()).dot(fit.gamma_s_hat);
    alpha[i] = sample[rows[i]].secondary - d.x(r, 1) * fit.tau_s_hat - xg - fit.intercept;
  }
  return alpha;
}

struct ControlFunctionFit {
  double tau_p_hat = 0.0;
  double delta_hat = 0.0;
  Eigen::VectorXd gamma_p_hat;
  std::vector<double> residuals; // alpha^S over observational units
  SecondaryModelFit secondary;
  OlsFit fit;
};

// Observational regression of Y^P on (1, W, X, alpha^S), alpha^S from the experimental fit.
inline ControlFunctionFit estimate_linear_control_function(const CombinedSample& sample) {
  sample.require_all_cells();
  ControlFunctionFit out;
  out.secondary = fit_secondary_experimental(sample);
  out.residuals = residuals_observational(sample, out.secondary);
  const auto rows = sample.indices(Group::Observational);
  DesignSpec spec;
  spec.extra.emplace_back("alpha_s", out.residuals);
  const Design d = build_design(sample, rows, spec);
  out.fit = ols(gather_primary(sample, rows), d);
  out.tau_p_hat = out.fit.coef("treatment");
  out.delta_hat = out.fit.coef("alpha_s");
  out.gamma_p_hat = out.fit.coefficients.segment(2, out.fit.coefficients.size() - 3);
  return out;
}

struct LinearImputationFit {
  double tau_hat = 0.0;
  double beta_hat = 0.0;  // W coefficient of the observational regression including Y^S
  double delta_hat = 0.0; // Y^S coefficient of that regression
  OlsFit outcome_fit;     // Y^P ~ (1, W, X, Y^S) on O
  OlsFit imputed_fit;     // imputed Y^P ~ (1, W, X) on E
};

// Predicts Y^P for experimental units from the observational regression on (1, W, X, Y^S),
// then regresses the predictions on (1, W, X) in the experimental group.
inline LinearImputationFit estimate_linear_imputation(const CombinedSample& sample) {
  sample.require_all_cells();
  LinearImputationFit out;
  const auto obs = sample.indices(Group::Observational);
  std::vector<double> ys_obs;
  for (auto i : obs) ys_obs.push_back(sample[i].secondary);
  DesignSpec with_s;
  with_s.extra.emplace_back("secondary", ys_obs);
  out.outcome_fit = ols(gather_primary(sample, obs), build_design(sample, obs, with_s));
  out.beta_hat = out.outcome_fit.coef("treatment");
  out.delta_hat = out.outcome_fit.coef("secondary");

  const auto exp = sample.indices(Group::Experimental);
  std::vector<double> ys_exp;
  for (auto i : exp) ys_exp.push_back(sample[i].secondary);
  DesignSpec predict_spec;
  predict_spec.extra.emplace_back("secondary", ys_exp);
  const Eigen::VectorXd imputed = build_design(sample, exp, predict_spec).x * out.outcome_fit.coefficients;
  out.imputed_fit = ols(imputed, build_design(sample, exp, {}));
  out.tau_hat = out.imputed_fit.coef("treatment");
  return out;
}

struct ResidualBalance {
  double mean_treated = 0.0;
  double mean_control = 0.0;
  double difference = 0.0;
  double robust_se = 0.0;
};

// Treated-minus-control mean residual with an unequal-variance standard error.
inline ResidualBalance residual_balance_diagnostic(std::span<const double> residuals, std::span<const int> treatments) {
  if (residuals.size() != treatments.size()) throw std::invalid_argument("residuals and treatments are misaligned");
  std::array<std::vector<double>, 2> arm;
  for (std::size_t i = 0; i < residuals.size(); ++i) arm[treatments[i] == 1].push_back(residuals[i]);
  ResidualBalance out;
  std::array<double, 2> mean{}, var{};
  for (int w = 0; w < 2; ++w) {
    if (arm[w].empty()) throw ValidationError("residual balance needs both treatment arms");
    mean[w] = pairwise_mean(arm[w]);
    if (arm[w].size() > 1) {
      std::vector<double> sq;
      sq.reserve(arm[w].size());
      for (double r : arm[w]) sq.push_back((r - mean[w]) * (r - mean[w]));
      var[w] = pairwise_sum(sq) / static_cast<double>(arm[w].size() - 1);
    }
  }
  out.mean_treated = mean[1];
  out.mean_control = mean[0];
  out.difference = mean[1] - mean[0];
  out.robust_se = std::sqrt(var[1] / static_cast<double>(arm[1].size()) + var[0] / static_cast<double>(arm[0].size()));
  return out;
}

} // namespace ltfuse
