#pragma once

#include <cstdint>
#include <cstdio>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "ltfuse/diagnostics.hpp"
#include "ltfuse/simulation.hpp"

namespace ltfuse {

using Json = nlohmann::ordered_json;

inline std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline Json to_json(const Warnings& warnings) {
  Json out = Json::array();
  for (const auto& w : warnings) out.push_back({{"code", w.code}, {"message", w.message}});
  return out;
}

namespace detail {

inline void reject_unknown_keys(const Json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) throw ValidationError("unknown key \"" + key + "\" in " + where);
}

template <class T>
T get_or(const Json& j, const char* key, T fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ValidationError("key \"" + std::string(key) + "\" in " + where + " has the wrong type");
  }
}

} // namespace detail

inline SimConfig sim_config_from_json(const Json& j) {
  detail::reject_unknown_keys(j,
                              {"n_E", "n_O", "tau_P", "tau_S", "delta", "confounding", "sigma_latent", "sigma_primary",
                               "experiment_share", "seed", "covariates"},
                              "simulation config");
  SimConfig c;
  const std::string where = "simulation config";
  c.n_e = detail::get_or<std::size_t>(j, "n_E", c.n_e, where);
  c.n_o = detail::get_or<std::size_t>(j, "n_O", c.n_o, where);
  c.tau_p = detail::get_or<double>(j, "tau_P", c.tau_p, where);
  c.tau_s = detail::get_or<double>(j, "tau_S", c.tau_s, where);
  c.delta = detail::get_or<double>(j, "delta", c.delta, where);
  c.confounding = detail::get_or<double>(j, "confounding", c.confounding, where);
  c.sigma_latent = detail::get_or<double>(j, "sigma_latent", c.sigma_latent, where);
  c.sigma_primary = detail::get_or<double>(j, "sigma_primary", c.sigma_primary, where);
  c.experiment_share = detail::get_or<double>(j, "experiment_share", c.experiment_share, where);
  c.seed = detail::get_or<std::uint64_t>(j, "seed", c.seed, where);
  if (j.contains("covariates")) {
    if (!j["covariates"].is_array()) throw ValidationError("\"covariates\" must be an array");
    for (const auto& cj : j["covariates"]) {
      detail::reject_unknown_keys(cj, {"name", "type", "levels", "gamma_S", "gamma_P", "shift"}, "covariate entry");
      SimCovariate cov;
      const std::string cw = "covariate entry";
      cov.name = detail::get_or<std::string>(cj, "name", "", cw);
      if (cov.name.empty()) throw ValidationError("covariate entry needs a \"name\"");
      const auto type = detail::get_or<std::string>(cj, "type", "continuous", cw);
      if (type == "continuous")
        cov.type = CovariateType::Continuous;
      else if (type == "categorical")
        cov.type = CovariateType::Categorical;
      else
        throw ValidationError("covariate type must be \"continuous\" or \"categorical\", got \"" + type + "\"");
      cov.levels = detail::get_or<std::size_t>(cj, "levels", cov.type == CovariateType::Categorical ? 2 : 1, cw);
      const std::size_t width = cov.type == CovariateType::Continuous ? 1 : cov.levels;
      cov.gamma_s = detail::get_or<std::vector<double>>(cj, "gamma_S", std::vector<double>(width, 0.0), cw);
      cov.gamma_p = detail::get_or<std::vector<double>>(cj, "gamma_P", std::vector<double>(width, 0.0), cw);
      cov.shift = detail::get_or<double>(cj, "shift", 0.0, cw);
      c.covariates.push_back(std::move(cov));
    }
  }
  c.validate();
  return c;
}

inline Json to_json(const SimConfig& c) {
  Json covs = Json::array();
  for (const auto& cov : c.covariates) {
    Json cj = {{"name", cov.name}, {"type", cov.type == CovariateType::Continuous ? "continuous" : "categorical"}};
    if (cov.type == CovariateType::Categorical) cj["levels"] = cov.levels;
    cj["gamma_S"] = cov.gamma_s;
    cj["gamma_P"] = cov.gamma_p;
    cj["shift"] = cov.shift;
    covs.push_back(std::move(cj));
  }
  return {{"n_E", c.n_e},
          {"n_O", c.n_o},
          {"tau_P", c.tau_p},
          {"tau_S", c.tau_s},
          {"delta", c.delta},
          {"confounding", c.confounding},
          {"sigma_latent", c.sigma_latent},
          {"sigma_primary", c.sigma_primary},
          {"experiment_share", c.experiment_share},
          {"seed", c.seed},
          {"covariates", std::move(covs)}};
}

inline Json to_json(const SimTruth& t) {
  return {{"tau_P", t.tau_p},
          {"tau_S", t.tau_s},
          {"naive_bias_S", t.naive_bias_s},
          {"naive_bias_P", t.naive_bias_p},
          {"direct_effect", t.direct_effect}};
}

inline Json to_json(const DiscreteDgpTable& t) {
  return {{"x_support", t.nx},
          {"latent_support", t.nu},
          {"noise_support", t.nv},
          {"p_x", {{"numerators", t.px}, {"denominator", t.px_den}}},
          {"p_observational_given_x", {{"numerators", t.pg_obs}, {"denominator", t.pg_den}}},
          {"p_latent_given_x", {{"numerators", t.pu}, {"denominator", t.pu_den}}},
          {"p_treated_given_group_x_latent", {{"numerators", t.pw1}, {"denominator", t.pw_den}}},
          {"p_noise", {{"numerators", t.pv}, {"denominator", t.pv_den}}},
          {"noise_values", t.v_values},
          {"secondary_potential_outcomes", t.ys},
          {"primary_potential_outcomes", t.yp}};
}

inline Json to_json(const DiagnosticReport& r) {
  Json j = {{"name", r.name}, {"method", to_string(r.method)}, {"statistic", r.statistic}, {"p_value", r.p_value}};
  if (r.df > 0) j["df"] = r.df;
  if (r.method == DiagnosticMethod::Permutation) {
    j["n_permutations"] = r.n_permutations;
    j["strata_used"] = r.strata_used;
  }
  if (r.coefficient) j["coefficient"] = *r.coefficient;
  if (r.se) j["robust_se"] = *r.se;
  j["note"] = r.note;
  j["warnings"] = to_json(r.warnings);
  return j;
}

inline Json to_json(const SecondaryGap& g) {
  return {{"name", "secondary-gap"},
          {"tau_s_experimental", g.tau_s_e},
          {"tau_s_observational", g.tau_s_o},
          {"difference", g.difference},
          {"robust_se", g.se},
          {"z", g.z},
          {"p_value", g.p_value}};
}

} // namespace ltfuse
