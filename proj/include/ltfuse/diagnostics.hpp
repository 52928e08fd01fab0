#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ltfuse/linear_cf.hpp"
#include "ltfuse/nuisance.hpp"

namespace ltfuse {

enum class DiagnosticMethod : std::uint8_t { RegressionRobust, Permutation };

inline std::string to_string(DiagnosticMethod m) {
  return m == DiagnosticMethod::RegressionRobust ? "regression-robust" : "permutation";
}

inline constexpr const char* joint_assumption_note =
    "rejection means the joint assumption set (internal validity of the experiment, conditional external validity, "
    "unconfoundedness of the observational assignment) fails; it does not identify which assumption is violated";

struct DiagnosticReport {
  std::string name;
  double statistic = 0.0;
  double p_value = 1.0;
  DiagnosticMethod method = DiagnosticMethod::RegressionRobust;
  std::size_t n_permutations = 0;
  std::size_t df = 0;
  std::size_t strata_used = 0;
  std::optional<double> coefficient;
  std::optional<double> se;
  std::string note;
  Warnings warnings;
};

struct Lemma2Options {
  DiagnosticMethod method = DiagnosticMethod::RegressionRobust;
  std::size_t n_permutations = 999;
  std::uint64_t seed = 0;
  std::size_t max_cells = 50; // cap on covariate cells when continuous X is coarsened
  unsigned threads = 1;
};

namespace detail {

// Covariate cell of every unit: categorical levels as-is, continuous covariates cut at pooled
// quantiles with a per-covariate bin count chosen so the grid has at most max_cells cells.
inline std::vector<std::vector<double>> coarsened_cells(const CombinedSample& sample, std::size_t max_cells) {
  const auto& covs = sample.schema().covariates;
  const auto levels = level_counts(sample);
  std::size_t categorical_cells = 1, n_continuous = 0;
  for (std::size_t j = 0; j < covs.size(); ++j) {
    if (covs[j].type == CovariateType::Categorical)
      categorical_cells *= levels[j];
    else
      ++n_continuous;
  }
  std::vector<std::vector<double>> edges(covs.size());
  if (n_continuous > 0) {
    const double room = static_cast<double>(max_cells) / static_cast<double>(categorical_cells);
    auto bins = static_cast<std::size_t>(std::floor(std::pow(std::max(room, 1.0), 1.0 / static_cast<double>(n_continuous)) + 1e-9));
    bins = std::max<std::size_t>(bins, 1);
    for (std::size_t j = 0; j < covs.size(); ++j) {
      if (covs[j].type != CovariateType::Continuous) continue;
      std::vector<double> v;
      v.reserve(sample.size());
      for (const Unit& u : sample.units()) v.push_back(u.covariates[j]);
      edges[j] = equal_mass_edges(std::move(v), bins);
    }
  }
  std::vector<std::vector<double>> out;
  out.reserve(sample.size());
  for (const Unit& u : sample.units()) {
    std::vector<double> cell = u.covariates;
    for (std::size_t j = 0; j < covs.size(); ++j)
      if (covs[j].type == CovariateType::Continuous) cell[j] = static_cast<double>(bin_index(edges[j], u.covariates[j]));
    out.push_back(std::move(cell));
  }
  return out;
}

struct Stratum {
  std::vector<double> y;
  std::vector<char> observational;
  std::size_t n_obs = 0;
};

// sum over strata of (n_E n_O / n) (mean_O - mean_E)^2
inline double gap_statistic(const std::vector<Stratum>& strata, const std::vector<std::vector<char>>* labels = nullptr) {
  double total = 0.0;
  for (std::size_t s = 0; s < strata.size(); ++s) {
    const auto& st = strata[s];
    const auto& lab = labels ? (*labels)[s] : st.observational;
    double sum_o = 0.0, sum_e = 0.0;
    for (std::size_t i = 0; i < st.y.size(); ++i) (lab[i] ? sum_o : sum_e) += st.y[i];
    const double n = static_cast<double>(st.y.size());
    const double n_o = static_cast<double>(st.n_obs);
    const double n_e = n - n_o;
    const double gap = sum_o / n_o - sum_e / n_e;
    total += n_e * n_o / n * gap * gap;
  }
  return total;
}

inline DiagnosticReport lemma2_permutation(const CombinedSample& sample, const Lemma2Options& options) {
  if (options.n_permutations < 1) throw ValidationError("permutation test needs at least one permutation");
  DiagnosticReport out;
  out.name = "lemma2";
  out.method = DiagnosticMethod::Permutation;
  out.n_permutations = options.n_permutations;
  out.note = joint_assumption_note;

  const auto cells = coarsened_cells(sample, options.max_cells);
  // Strata in order of their first unit, which does not depend on category labels.
  std::map<std::pair<int, std::vector<double>>, std::size_t> slot;
  std::vector<Stratum> strata;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const Unit& u = sample[i];
    const auto [it, inserted] = slot.try_emplace({u.treatment, cells[i]}, strata.size());
    if (inserted) strata.emplace_back();
    auto& st = strata[it->second];
    st.y.push_back(u.secondary);
    st.observational.push_back(u.group == Group::Observational);
    st.n_obs += u.group == Group::Observational;
  }
  std::vector<Stratum> kept;
  std::size_t dropped = 0;
  for (auto& st : strata) {
    if (st.n_obs == 0 || st.n_obs == st.y.size())
      ++dropped;
    else
      kept.push_back(std::move(st));
  }
  if (dropped > 0)
    out.warnings.push_back({"stratum_dropped", std::to_string(dropped) +
                                                   " (treatment, covariate-cell) stratum(s) contain a single group"});
  if (kept.empty()) throw EstimationError("lemma2 permutation test: every stratum contains a single group");
  out.strata_used = kept.size();
  out.statistic = gap_statistic(kept);

  std::vector<char> exceeds(options.n_permutations, 0);
  parallel_for(options.n_permutations, options.threads, [&](std::size_t b) {
    std::mt19937_64 rng(derive_seed(options.seed, b));
    std::vector<std::vector<char>> labels;
    labels.reserve(kept.size());
    for (const auto& st : kept) {
      auto lab = st.observational;
      std::shuffle(lab.begin(), lab.end(), rng);
      labels.push_back(std::move(lab));
    }
    // Relative tolerance so label-symmetric permutations are not lost to rounding.
    exceeds[b] = gap_statistic(kept, &labels) >= out.statistic * (1.0 - 1e-12);
  });
  std::size_t count = 0;
  for (char e : exceeds) count += static_cast<std::size_t>(e);
  out.p_value = static_cast<double>(1 + count) / static_cast<double>(options.n_permutations + 1);
  return out;
}

inline DiagnosticReport lemma2_regression(const CombinedSample& sample) {
  DiagnosticReport out;
  out.name = "lemma2";
  out.method = DiagnosticMethod::RegressionRobust;
  out.note = joint_assumption_note;
  std::vector<std::size_t> rows(sample.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  DesignSpec spec;
  spec.group_indicator = true;
  spec.treatment_by_group = true;
  const OlsFit fit = ols(gather_secondary(sample, rows), build_design(sample, rows, spec));
  const WaldTest t = wald_test(fit, {"group_O", "treatment:group_O"});
  out.statistic = t.statistic;
  out.df = t.df;
  out.p_value = t.p_value;
  return out;
}

} // namespace detail

// Tests the implication that, given X and W, the secondary outcome has the same distribution in
// both groups.
inline DiagnosticReport test_lemma2(const CombinedSample& sample, const Lemma2Options& options = {}) {
  sample.require_all_cells();
  return options.method == DiagnosticMethod::Permutation ? detail::lemma2_permutation(sample, options)
                                                         : detail::lemma2_regression(sample);
}

struct SecondaryGap {
  double tau_s_e = 0.0;
  double tau_s_o = 0.0;
  double difference = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p_value = 1.0;
};

inline SecondaryGap compare_secondary_effects(const CombinedSample& sample) {
  sample.require_all_cells();
  const OlsFit e = regress_within_group(sample, Group::Experimental, Outcome::Secondary);
  const OlsFit o = regress_within_group(sample, Group::Observational, Outcome::Secondary);
  SecondaryGap out;
  out.tau_s_e = e.coef("treatment");
  out.tau_s_o = o.coef("treatment");
  out.difference = out.tau_s_e - out.tau_s_o;
  const double se_e = e.se("treatment"), se_o = o.se("treatment");
  out.se = std::sqrt(se_e * se_e + se_o * se_o);
  out.z = out.se > 0.0 ? out.difference / out.se : (out.difference == 0.0 ? 0.0 : std::copysign(INFINITY, out.difference));
  out.p_value = out.difference == 0.0 ? 1.0 : normal_two_sided_p(out.z);
  return out;
}

// Observational regression of Y^P on (1, W, X, Y^S). Under surrogacy the W coefficient is 0;
// a significant coefficient means the treatment reaches the primary outcome through other channels.
inline DiagnosticReport surrogacy_check(const CombinedSample& sample) {
  sample.require_all_cells();
  const auto rows = sample.indices(Group::Observational);
  DesignSpec spec;
  std::vector<double> ys;
  ys.reserve(rows.size());
  for (auto i : rows) ys.push_back(sample[i].secondary);
  spec.extra.emplace_back("secondary", std::move(ys));
  const OlsFit fit = ols(gather_primary(sample, rows), build_design(sample, rows, spec));
  DiagnosticReport out;
  out.name = "surrogacy";
  out.method = DiagnosticMethod::RegressionRobust;
  out.coefficient = fit.coef("treatment");
  out.se = fit.se("treatment");
  out.statistic = *out.se > 0.0 ? *out.coefficient / *out.se : 0.0;
  out.df = 1;
  out.p_value = *out.se > 0.0 ? normal_two_sided_p(out.statistic) : 1.0;
  out.note = "a coefficient near 0 is consistent with surrogacy; a significant coefficient indicates the treatment "
             "affects the primary outcome through channels other than the secondary outcome";
  return out;
}

} // namespace ltfuse
