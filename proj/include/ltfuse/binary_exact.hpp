#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ltfuse/data_model.hpp"

namespace ltfuse {

enum class Outcome : std::uint8_t { Secondary, Primary };

// Cell averages \bar Y^{t,g}_w for binary outcomes without covariates. The primary
// averages of the experimental group are never defined.
struct BinaryCellMeans {
  // ybar[t][g][w], t: 0 = secondary, 1 = primary; g: 0 = E, 1 = O.
  std::array<std::array<std::array<std::optional<double>, 2>, 2>, 2> ybar{};
  std::array<std::array<std::size_t, 2>, 2> counts{};

  double mean(Outcome t, Group g, int w) const {
    const auto& v = ybar[t == Outcome::Primary][g == Group::Observational][w];
    if (!v) throw ValidationError("primary outcome mean is undefined in the experimental group");
    return *v;
  }
};

struct BinaryEstimate {
  double tau_hat = 0.0;
  Warnings warnings;
};

namespace detail {

inline void require_binary_sample(const CombinedSample& sample) {
  if (!sample.schema().covariates.empty())
    throw ValidationError("binary estimators take no covariates; the sample declares " +
                          std::to_string(sample.schema().covariates.size()));
  for (const Unit& u : sample.units()) {
    if (u.secondary != 0.0 && u.secondary != 1.0) throw ValidationError("non-binary secondary outcome value");
    if (u.primary && *u.primary != 0.0 && *u.primary != 1.0) throw ValidationError("non-binary primary outcome value");
  }
  sample.require_all_cells();
}

inline double arm_mean(const std::vector<double>& v) { return pairwise_mean(v); }

} // namespace detail

inline BinaryCellMeans binary_cell_means(const CombinedSample& sample) {
  detail::require_binary_sample(sample);
  std::array<std::array<std::array<std::vector<double>, 2>, 2>, 2> values;
  for (const Unit& u : sample.units()) {
    const int g = u.group == Group::Observational;
    values[0][g][u.treatment].push_back(u.secondary);
    if (u.primary) values[1][g][u.treatment].push_back(*u.primary);
  }
  BinaryCellMeans m;
  for (int g = 0; g < 2; ++g) {
    for (int w = 0; w < 2; ++w) {
      m.counts[g][w] = values[0][g][w].size();
      m.ybar[0][g][w] = detail::arm_mean(values[0][g][w]);
      if (g == 1) m.ybar[1][g][w] = detail::arm_mean(values[1][g][w]);
    }
  }
  return m;
}

// \hat\tau^{S,E}
inline double tau_secondary_experimental(const BinaryCellMeans& m) {
  return m.mean(Outcome::Secondary, Group::Experimental, 1) - m.mean(Outcome::Secondary, Group::Experimental, 0);
}

// Unadjusted treated-minus-control difference in the observational group.
inline double tau_naive_observational(const BinaryCellMeans& m, Outcome t) {
  return m.mean(t, Group::Observational, 1) - m.mean(t, Group::Observational, 0);
}

// Same difference computed directly from a sample of any outcome type.
inline double tau_naive_observational(const CombinedSample& sample, Outcome t) {
  sample.require_all_cells();
  std::array<std::vector<double>, 2> arm;
  for (const Unit& u : sample.units())
    if (u.group == Group::Observational) arm[u.treatment].push_back(t == Outcome::Primary ? *u.primary : u.secondary);
  return pairwise_mean(arm[1]) - pairwise_mean(arm[0]);
}

// Imputes each experimental unit's primary outcome with the observational cell mean
// \bar Y^{P,O}_{w,s} and differences the imputed arm means.
inline BinaryEstimate estimate_binary_imputation(const CombinedSample& sample) {
  detail::require_binary_sample(sample);
  std::array<std::array<std::vector<double>, 2>, 2> obs; // [w][s]
  for (const Unit& u : sample.units())
    if (u.group == Group::Observational) obs[u.treatment][static_cast<int>(u.secondary)].push_back(*u.primary);
  std::array<std::array<std::optional<double>, 2>, 2> cell_mean{};
  for (int w = 0; w < 2; ++w)
    for (int s = 0; s < 2; ++s)
      if (!obs[w][s].empty()) cell_mean[w][s] = pairwise_mean(obs[w][s]);

  std::array<std::vector<double>, 2> imputed;
  for (const Unit& u : sample.units()) {
    if (u.group != Group::Experimental) continue;
    const int s = static_cast<int>(u.secondary);
    const auto& v = cell_mean[u.treatment][s];
    if (!v)
      throw EstimationError("empty observational cell (w=" + std::to_string(u.treatment) + ", s=" + std::to_string(s) +
                            "): no observational unit to impute from (positivity failure)");
    imputed[u.treatment].push_back(*v);
  }
  return {pairwise_mean(imputed[1]) - pairwise_mean(imputed[0]), {}};
}

// Reweights observational units by lambda_{w,s} = P_E(S=s | w) / P_O(S=s | w). The weights are
// formed from joint (w, s) frequencies; the extra factor P_E(w) / P_O(w) is constant within an arm
// and cancels in the weighted mean.
inline BinaryEstimate estimate_binary_weighting(const CombinedSample& sample) {
  detail::require_binary_sample(sample);
  BinaryEstimate out;
  std::array<std::array<std::array<std::size_t, 2>, 2>, 2> n{}; // [g][w][s]
  for (const Unit& u : sample.units())
    ++n[u.group == Group::Observational][u.treatment][static_cast<int>(u.secondary)];
  const double n_e = static_cast<double>(sample.count(Group::Experimental));
  const double n_o = static_cast<double>(sample.count(Group::Observational));
  std::array<std::array<double, 2>, 2> lambda{}; // [w][s]
  for (int w = 0; w < 2; ++w) {
    for (int s = 0; s < 2; ++s) {
      const std::size_t ne = n[0][w][s], no = n[1][w][s];
      if (no == 0) {
        if (ne != 0)
          throw EstimationError("weight lambda_{" + std::to_string(w) + "," + std::to_string(s) +
                                "} has a zero observational frequency but a positive experimental frequency");
        lambda[w][s] = 0.0;
      } else if (ne == 0) {
        lambda[w][s] = 0.0;
        out.warnings.push_back({"zero_weight_cell", "observational units with w=" + std::to_string(w) + ", s=" +
                                                        std::to_string(s) +
                                                        " have no experimental counterpart and receive weight 0"});
      } else {
        lambda[w][s] = (static_cast<double>(ne) / n_e) / (static_cast<double>(no) / n_o);
      }
    }
  }
  std::array<std::vector<double>, 2> primary, weighted, weights;
  for (const Unit& u : sample.units()) {
    if (u.group != Group::Observational) continue;
    const double l = lambda[u.treatment][static_cast<int>(u.secondary)];
    primary[u.treatment].push_back(*u.primary);
    weighted[u.treatment].push_back(l * *u.primary);
    weights[u.treatment].push_back(l);
  }
  std::array<double, 2> arm{};
  for (int w = 0; w < 2; ++w) {
    const double total = pairwise_sum(weights[w]);
    if (total <= 0.0) throw EstimationError("all weights are zero in observational arm w=" + std::to_string(w));
    // equal weights: plain mean, no rounding from the scaling
    const bool equal = lambda[w][0] == lambda[w][1] || n[1][w][0] == 0 || n[1][w][1] == 0;
    arm[w] = equal ? pairwise_mean(primary[w]) : pairwise_sum(weighted[w]) / total;
  }
  out.tau_hat = arm[1] - arm[0];
  return out;
}

} // namespace ltfuse
