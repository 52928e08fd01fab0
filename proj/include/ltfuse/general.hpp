#pragma once

#include <algorithm>
#include <array>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ltfuse/nuisance.hpp"

namespace ltfuse {

// How treatment was assigned in the experimental group. Randomized: completely at random.
// Unconfounded: at random given X, which adds inverse-propensity factors e(x,E).
enum class ExperimentalDesign : std::uint8_t { Randomized, Unconfounded };

struct WeightSummary {
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  std::size_t count = 0;
  std::size_t trimmed = 0;
  std::size_t zero = 0;

  void add(double w, bool was_trimmed) {
    min = std::min(min, w);
    max = std::max(max, w);
    ++count;
    trimmed += was_trimmed;
    zero += w == 0.0;
  }
};

struct GeneralEstimate {
  double tau_hat = 0.0;
  Warnings warnings;
  WeightSummary weights;
};

namespace detail {

// Hajek difference: sum(w*v)/sum(w) over treated minus the same over controls. An arm whose
// weights are all equal uses the plain mean, which is the same quantity without the rounding.
struct HajekArms {
  std::array<std::vector<double>, 2> values, weighted, weights;

  void add(int arm, double weight, double value) {
    values[arm].push_back(value);
    weights[arm].push_back(weight);
    weighted[arm].push_back(weight * value);
  }

  double difference(const char* what) const {
    std::array<double, 2> mean{};
    for (int w = 0; w < 2; ++w) {
      const auto& wt = weights[w];
      const double total = pairwise_sum(wt);
      if (!(total > 0.0))
        throw EstimationError(std::string(what) + ": zero total weight in arm w=" + std::to_string(w));
      const bool constant = std::all_of(wt.begin(), wt.end(), [&](double x) { return x == wt.front(); });
      mean[w] = constant ? pairwise_mean(values[w]) : pairwise_sum(weighted[w]) / total;
    }
    return mean[1] - mean[0];
  }
};

inline void note_trimming(GeneralEstimate& out, const char* what) {
  if (out.weights.trimmed > 0)
    out.warnings.push_back({"trimmed", std::to_string(out.weights.trimmed) + " " + what +
                                           " weight evaluation(s) used a trimmed probability"});
}

// 1/e or 1/(1-e) for the experimental propensity, or 1 when no propensity is supplied.
inline Evaluation propensity_factor(const ProbabilityFit* e_fit, int w, const std::vector<double>& x) {
  if (!e_fit) return {1.0, false};
  const Evaluation e = e_fit->evaluate(x);
  return {w == 1 ? 1.0 / e.value : 1.0 / (1.0 - e.value), e.trimmed};
}

} // namespace detail

// Imputes kappa(W_i, X_i, Y^S_i) for experimental units and takes the Hajek difference with
// weights r(X)/(1-r(X)), times 1/e(X,E) or 1/(1-e(X,E)) when a propensity is supplied.
inline GeneralEstimate estimate_general_imputation(const CombinedSample& sample, const ConditionalMeanFit& kappa,
                                                   const ProbabilityFit& odds,
                                                   const ProbabilityFit* propensity_e = nullptr) {
  sample.require_all_cells();
  GeneralEstimate out;
  append(out.warnings, kappa.warnings);
  append(out.warnings, odds.warnings);
  if (propensity_e) append(out.warnings, propensity_e->warnings);
  detail::HajekArms arms;
  for (const Unit& u : sample.units()) {
    if (u.group != Group::Experimental) continue;
    const Evaluation o = odds.odds(u.covariates);
    const Evaluation a = detail::propensity_factor(propensity_e, u.treatment, u.covariates);
    const double weight = o.value * a.value;
    out.weights.add(weight, o.trimmed || a.trimmed);
    arms.add(u.treatment, weight, kappa.evaluate(u.treatment, u.covariates, u.secondary));
  }
  out.tau_hat = arms.difference("imputation");
  detail::note_trimming(out, "imputation");
  return out;
}

// Hajek difference of lambda-weighted primary outcomes in the observational group.
inline GeneralEstimate estimate_general_weighting(const CombinedSample& sample, const DensityRatioFit& lambda,
                                                  const ProbabilityFit* propensity_e = nullptr) {
  sample.require_all_cells();
  GeneralEstimate out;
  append(out.warnings, lambda.warnings);
  if (propensity_e) append(out.warnings, propensity_e->warnings);
  detail::HajekArms arms;
  for (const Unit& u : sample.units()) {
    if (u.group != Group::Observational) continue;
    const Evaluation l = lambda.evaluate(u.treatment, u.covariates, u.secondary);
    const Evaluation a = detail::propensity_factor(propensity_e, u.treatment, u.covariates);
    const double weight = l.value * a.value;
    out.weights.add(weight, l.trimmed || a.trimmed);
    arms.add(u.treatment, weight, *u.primary);
  }
  out.tau_hat = arms.difference("weighting");
  detail::note_trimming(out, "weighting");
  return out;
}

// Averages gamma(W_i, eta_i, X_i) over experimental units by arm. Without `odds` the arms are
// plain means; with it they are Hajek means weighted by r/(1-r) (and 1/e terms if supplied),
// which moves the average to the observational covariate distribution.
inline GeneralEstimate estimate_control_function(const CombinedSample& sample, const ControlVariableFit& eta,
                                                 const ConditionalMeanFit& gamma,
                                                 const ProbabilityFit* odds = nullptr,
                                                 const ProbabilityFit* propensity_e = nullptr) {
  sample.require_all_cells();
  if (eta.eta.size() != sample.size()) throw std::invalid_argument("control variable is not aligned to the sample");
  GeneralEstimate out;
  append(out.warnings, eta.warnings);
  append(out.warnings, gamma.warnings);
  if (odds) append(out.warnings, odds->warnings);
  if (propensity_e) append(out.warnings, propensity_e->warnings);
  detail::HajekArms arms;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const Unit& u = sample[i];
    if (u.group != Group::Experimental) continue;
    Evaluation o{1.0, false};
    if (odds) o = odds->odds(u.covariates);
    const Evaluation a = detail::propensity_factor(propensity_e, u.treatment, u.covariates);
    const double weight = o.value * a.value;
    out.weights.add(weight, o.trimmed || a.trimmed);
    arms.add(u.treatment, weight, gamma.evaluate(u.treatment, u.covariates, eta.eta[i]));
  }
  out.tau_hat = arms.difference("control-function");
  detail::note_trimming(out, "control-function");
  return out;
}

// ---------------------------------------------------------------------------
// Fit-everything pipelines used by the CLI and the bootstrap.

struct GeneralConfig {
  NuisanceOptions nuisance;
  ExperimentalDesign design = ExperimentalDesign::Randomized;
};

namespace detail {
inline std::optional<ProbabilityFit> experimental_propensity(const CombinedSample& sample, const GeneralConfig& cfg) {
  if (cfg.design == ExperimentalDesign::Randomized) return std::nullopt;
  return fit_propensity(sample, Group::Experimental, cfg.nuisance);
}
} // namespace detail

inline GeneralEstimate run_general_imputation(const CombinedSample& sample, const GeneralConfig& cfg) {
  sample.require_all_cells();
  const auto kappa = fit_kappa(sample, cfg.nuisance);
  const auto odds = fit_selection_odds(sample, cfg.nuisance);
  const auto e = detail::experimental_propensity(sample, cfg);
  return estimate_general_imputation(sample, kappa, odds, e ? &*e : nullptr);
}

inline GeneralEstimate run_general_weighting(const CombinedSample& sample, const GeneralConfig& cfg) {
  sample.require_all_cells();
  const auto lambda = fit_density_ratio(sample, cfg.nuisance);
  const auto e = detail::experimental_propensity(sample, cfg);
  return estimate_general_weighting(sample, lambda, e ? &*e : nullptr);
}

inline GeneralEstimate run_control_function(const CombinedSample& sample, const GeneralConfig& cfg) {
  sample.require_all_cells();
  const auto eta = fit_control_variable(sample, cfg.nuisance);
  const auto gamma = fit_gamma(sample, eta, cfg.nuisance);
  std::optional<ProbabilityFit> odds;
  if (!sample.schema().covariates.empty()) odds = fit_selection_odds(sample, cfg.nuisance);
  const auto e = detail::experimental_propensity(sample, cfg);
  return estimate_control_function(sample, eta, gamma, odds ? &*odds : nullptr, e ? &*e : nullptr);
}

} // namespace ltfuse
