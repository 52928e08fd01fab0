#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "ltfuse/data_model.hpp"
#include "ltfuse/oracle.hpp"

namespace ltfuse {

struct SimCovariate {
  std::string name;
  CovariateType type = CovariateType::Continuous;
  std::size_t levels = 2; // categorical only; levels are equiprobable in the experimental group
  // Outcome coefficients: one entry for a continuous covariate, one per level for a categorical one.
  std::vector<double> gamma_s{0.5};
  std::vector<double> gamma_p{0.5};
  // Mean shift of the observational covariate distribution (of the latent normal for categorical).
  double shift = 0.0;
};

// Linear constant-effect DGP:
//   Y^S = W tau_S + g_S(X) + alpha,        alpha = sigma_latent * Z
//   Y^P = W tau_P + g_P(X) + delta alpha + sigma_primary * eps
//   experimental W ~ Bernoulli(experiment_share); observational logit pr(W=1) = confounding * alpha
struct SimConfig {
  std::size_t n_e = 1000;
  std::size_t n_o = 1000;
  std::vector<SimCovariate> covariates;
  double tau_p = 0.06;
  double tau_s = 0.15;
  double delta = 0.64;
  double confounding = 1.0;
  double sigma_latent = 1.0;
  double sigma_primary = 1.0;
  double experiment_share = 0.5;
  std::uint64_t seed = 1;

  void validate() const {
    if (n_e < 4 || n_o < 4) throw ValidationError("simulation needs n_E, n_O >= 4");
    if (!(sigma_latent > 0.0) || !(sigma_primary > 0.0)) throw ValidationError("noise scales must be positive");
    if (!(experiment_share > 0.0 && experiment_share < 1.0))
      throw ValidationError("experiment_share must lie in (0, 1)");
    for (const auto& c : covariates) {
      const std::size_t want = c.type == CovariateType::Continuous ? 1 : c.levels;
      if (c.type == CovariateType::Categorical && c.levels < 2)
        throw ValidationError("categorical covariate " + c.name + " needs at least 2 levels");
      if (c.gamma_s.size() != want || c.gamma_p.size() != want)
        throw ValidationError("covariate " + c.name + " needs " + std::to_string(want) + " coefficient(s) per outcome");
    }
  }
};

struct SimTruth {
  double tau_p = 0.0;
  double tau_s = 0.0;
  double naive_bias_s = 0.0; // E[alpha | W=1, O] - E[alpha | W=0, O]
  double naive_bias_p = 0.0; // delta * naive_bias_s
  double direct_effect = 0.0; // W coefficient of Y^P on (1, W, X, Y^S): tau_p - delta tau_s
};

inline double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

// Selection gap of the latent under logistic assignment, by adaptive Gauss-Kronrod quadrature
// over the standard normal density.
inline double latent_selection_gap(double confounding, double sigma_latent) {
  using boost::math::quadrature::gauss_kronrod;
  constexpr double pi = 3.14159265358979323846;
  auto phi = [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * pi); };
  auto integrate = [](auto f) { return gauss_kronrod<double, 61>::integrate(f, -40.0, 40.0, 15, 1e-14); };
  const double s = sigma_latent;
  const double c = confounding;
  const double p1 = integrate([&](double z) { return phi(z) * logistic(c * s * z); });
  const double m1 = integrate([&](double z) { return s * z * phi(z) * logistic(c * s * z); });
  const double p0 = 1.0 - p1;
  const double m0 = integrate([&](double z) { return s * z * phi(z) * (1.0 - logistic(c * s * z)); });
  return m1 / p1 - m0 / p0;
}

inline SimTruth true_tau(const SimConfig& config) {
  config.validate();
  SimTruth t;
  t.tau_p = config.tau_p;
  t.tau_s = config.tau_s;
  t.naive_bias_s = latent_selection_gap(config.confounding, config.sigma_latent);
  t.naive_bias_p = config.delta * t.naive_bias_s;
  t.direct_effect = config.tau_p - config.delta * config.tau_s;
  return t;
}

inline Schema simulation_schema(const SimConfig& config) {
  Schema schema;
  for (const auto& c : config.covariates) {
    CovariateSpec spec{c.name, c.type, {}};
    if (c.type == CovariateType::Categorical)
      for (std::size_t l = 0; l < c.levels; ++l) spec.levels.push_back(std::to_string(l));
    schema.covariates.push_back(std::move(spec));
  }
  return schema;
}

struct LinearSimulation {
  CombinedSample sample;
  SimTruth truth;
};

// Deterministic given config.seed: units are drawn experimental first, then observational,
// each unit consuming draws in a fixed order.
inline LinearSimulation simulate_linear(const SimConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const boost::math::normal standard;

  std::vector<std::vector<double>> cutpoints;
  for (const auto& c : config.covariates) {
    std::vector<double> cuts;
    if (c.type == CovariateType::Categorical)
      for (std::size_t l = 1; l < c.levels; ++l)
        cuts.push_back(boost::math::quantile(standard, static_cast<double>(l) / static_cast<double>(c.levels)));
    cutpoints.push_back(std::move(cuts));
  }

  std::vector<Unit> units;
  units.reserve(config.n_e + config.n_o);
  for (Group g : {Group::Experimental, Group::Observational}) {
    const std::size_t n = g == Group::Experimental ? config.n_e : config.n_o;
    for (std::size_t i = 0; i < n; ++i) {
      Unit u;
      u.group = g;
      double gs = 0.0, gp = 0.0;
      for (std::size_t j = 0; j < config.covariates.size(); ++j) {
        const auto& c = config.covariates[j];
        const double z = normal(rng) + (g == Group::Observational ? c.shift : 0.0);
        if (c.type == CovariateType::Continuous) {
          u.covariates.push_back(z);
          gs += c.gamma_s[0] * z;
          gp += c.gamma_p[0] * z;
        } else {
          const auto level = bin_index(cutpoints[j], z);
          u.covariates.push_back(static_cast<double>(level));
          gs += c.gamma_s[level];
          gp += c.gamma_p[level];
        }
      }
      const double alpha = config.sigma_latent * normal(rng);
      const double eps = normal(rng);
      const double p_treat =
          g == Group::Experimental ? config.experiment_share : logistic(config.confounding * alpha);
      u.treatment = uniform(rng) < p_treat ? 1 : 0;
      u.secondary = u.treatment * config.tau_s + gs + alpha;
      if (g == Group::Observational)
        u.primary = u.treatment * config.tau_p + gp + config.delta * alpha + config.sigma_primary * eps;
      units.push_back(std::move(u));
    }
  }
  return {CombinedSample::create(simulation_schema(config), std::move(units)), true_tau(config)};
}

// ---------------------------------------------------------------------------
// Random finite DGPs for exact identification checks.

struct DiscreteSizes {
  std::size_t x = 2;      // covariate support
  std::size_t latent = 2; // latent support, hence secondary-outcome support per (w, x)
  std::size_t noise = 2;  // support of the independent primary-outcome noise
};

// Each factor is drawn so that one assumption holds by construction: U and V do not depend on G
// (conditional external validity), experimental W does not depend on U (internal validity),
// observational W does depend on U (confounding), and Y^S(w) is strictly increasing in U
// with Y^P(w) depending on (U, X, w) and independent noise (latent unconfoundedness).
inline DiscreteDgpTable simulate_discrete(std::uint64_t seed, DiscreteSizes sizes, bool randomized_experiment = true) {
  for (std::size_t s : {sizes.x, sizes.latent, sizes.noise})
    if (s < 2 || s > 4) throw ValidationError("discrete support sizes must lie in [2, 4]");
  std::mt19937_64 rng(seed);
  auto uniform_int = [&](std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(rng);
  };
  // Random composition of `den` into `parts` positive integers.
  auto composition = [&](std::size_t parts, std::int64_t den) {
    std::vector<std::int64_t> out(parts, 1);
    for (std::int64_t extra = den - static_cast<std::int64_t>(parts); extra > 0; --extra)
      ++out[static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(parts) - 1))];
    return out;
  };
  // Quarter-integers are exact in binary floating point.
  auto quarter = [&](std::int64_t lo, std::int64_t hi) { return static_cast<double>(uniform_int(lo, hi)) / 4.0; };

  DiscreteDgpTable t;
  t.nx = sizes.x;
  t.nu = sizes.latent;
  t.nv = sizes.noise;
  t.px_den = static_cast<std::int64_t>(t.nx) + uniform_int(0, 2);
  t.px = composition(t.nx, t.px_den);
  t.pg_den = 4;
  for (std::size_t x = 0; x < t.nx; ++x) t.pg_obs.push_back(uniform_int(1, 3));
  t.pu_den = static_cast<std::int64_t>(t.nu) + uniform_int(0, 2);
  for (std::size_t x = 0; x < t.nx; ++x) {
    const auto c = composition(t.nu, t.pu_den);
    t.pu.insert(t.pu.end(), c.begin(), c.end());
  }
  t.pw_den = 4;
  t.pw1.assign(2 * t.nx * t.nu, 0);
  const std::int64_t shared = uniform_int(1, 3);
  for (std::size_t x = 0; x < t.nx; ++x) {
    const std::int64_t e_share = randomized_experiment ? shared : uniform_int(1, 3);
    for (std::size_t u = 0; u < t.nu; ++u) {
      t.pw1[t.assignment_index(Group::Experimental, x, u)] = e_share;
      t.pw1[t.assignment_index(Group::Observational, x, u)] = uniform_int(1, 3);
    }
  }
  t.pv_den = static_cast<std::int64_t>(t.nv) + uniform_int(0, 2);
  t.pv = composition(t.nv, t.pv_den);
  for (std::size_t v = 0; v < t.nv; ++v) t.v_values.push_back(quarter(-8, 8));

  t.ys.assign(2 * t.nx * t.nu, 0.0);
  t.yp.assign(2 * t.nx * t.nu, 0.0);
  for (int w : {0, 1}) {
    for (std::size_t x = 0; x < t.nx; ++x) {
      double level = quarter(-8, 8);
      for (std::size_t u = 0; u < t.nu; ++u) {
        if (u > 0) level += quarter(1, 8);
        t.ys[t.outcome_index(w, x, u)] = level;
        t.yp[t.outcome_index(w, x, u)] = quarter(-16, 16);
      }
    }
  }
  return t;
}

inline double true_tau(const DiscreteDgpTable& table) { return potential_outcome_tau(table); }

} // namespace ltfuse
