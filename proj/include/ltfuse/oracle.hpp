#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "ltfuse/data_model.hpp"

namespace ltfuse {

// A finite data-generating process in factorized form. Every probability is an integer
// numerator over a fixed denominator, so the "full population" sample whose empirical
// frequencies equal the table exists and is small.
//
//   X ~ px / px_den
//   G | X: pr(G=O | x) = pg_obs[x] / pg_den            (latent U and noise V do not depend on G)
//   U | X ~ pu[x*nu + u] / pu_den
//   W | G, X, U: pr(W=1) = pw1[(g*nx + x)*nu + u] / pw_den, g = 0 (E), 1 (O)
//   V ~ pv / pv_den, independent of everything
//   Y^S(w) = ys[(w*nx + x)*nu + u]       (strictly increasing in u)
//   Y^P(w) = yp[(w*nx + x)*nu + u] + v_values[v]
struct DiscreteDgpTable {
  std::size_t nx = 0, nu = 0, nv = 0;
  std::vector<std::int64_t> px;
  std::int64_t px_den = 1;
  std::vector<std::int64_t> pg_obs;
  std::int64_t pg_den = 1;
  std::vector<std::int64_t> pu;
  std::int64_t pu_den = 1;
  std::vector<std::int64_t> pw1;
  std::int64_t pw_den = 1;
  std::vector<std::int64_t> pv;
  std::int64_t pv_den = 1;
  std::vector<double> v_values;
  std::vector<double> ys;
  std::vector<double> yp;

  std::size_t outcome_index(int w, std::size_t x, std::size_t u) const {
    return (static_cast<std::size_t>(w) * nx + x) * nu + u;
  }
  std::size_t assignment_index(Group g, std::size_t x, std::size_t u) const {
    return ((g == Group::Observational ? 1u : 0u) * nx + x) * nu + u;
  }

  std::int64_t population_size() const { return px_den * pg_den * pu_den * pw_den * pv_den; }

  // Experimental assignment ignores U (internal validity) and Y^S(w) is strictly increasing in U
  // for every (w, x) (so conditioning on Y^S(w) fixes the latent); group independence of the
  // potential outcomes given X holds by the factorization itself.
  bool satisfies_assumptions() const {
    for (std::size_t x = 0; x < nx; ++x) {
      for (std::size_t u = 1; u < nu; ++u) {
        if (pw1[assignment_index(Group::Experimental, x, u)] != pw1[assignment_index(Group::Experimental, x, 0)])
          return false;
        for (int w : {0, 1})
          if (!(ys[outcome_index(w, x, u)] > ys[outcome_index(w, x, u - 1)])) return false;
      }
    }
    return true;
  }

  void validate() const {
    auto check = [](const std::vector<std::int64_t>& nums, std::size_t stride, std::int64_t den, const char* what) {
      for (std::size_t start = 0; start < nums.size(); start += stride) {
        std::int64_t total = 0;
        for (std::size_t i = start; i < start + stride; ++i) {
          if (nums[i] < 0) throw ValidationError(std::string(what) + ": negative probability");
          total += nums[i];
        }
        if (total != den) throw ValidationError(std::string(what) + ": probabilities do not sum to 1");
      }
    };
    if (px.size() != nx || pg_obs.size() != nx || pu.size() != nx * nu || pw1.size() != 2 * nx * nu ||
        pv.size() != nv || v_values.size() != nv || ys.size() != 2 * nx * nu || yp.size() != 2 * nx * nu)
      throw ValidationError("discrete DGP table has inconsistent dimensions");
    check(px, nx, px_den, "P(X)");
    check(pu, nu, pu_den, "P(U | X)");
    check(pv, nv, pv_den, "P(V)");
    for (auto n : pg_obs)
      if (n < 0 || n > pg_den) throw ValidationError("P(G | X) out of range");
    for (auto n : pw1)
      if (n < 0 || n > pw_den) throw ValidationError("P(W | G, X, U) out of range");
  }
};

// One cell of the full joint table of (G, X, W, U, V) with both potential outcomes.
struct DgpAtom {
  Group group;
  std::size_t x, u, v;
  int w;
  double ys0, ys1, yp0, yp1;
  double probability;
  std::int64_t count; // multiplicity in the full population sample

  double observed_secondary() const { return w == 1 ? ys1 : ys0; }
  double observed_primary() const { return w == 1 ? yp1 : yp0; }
};

inline std::vector<DgpAtom> joint_table(const DiscreteDgpTable& t) {
  t.validate();
  std::vector<DgpAtom> atoms;
  const double total = static_cast<double>(t.population_size());
  for (Group g : {Group::Experimental, Group::Observational}) {
    for (std::size_t x = 0; x < t.nx; ++x) {
      const std::int64_t ng = g == Group::Observational ? t.pg_obs[x] : t.pg_den - t.pg_obs[x];
      for (std::size_t u = 0; u < t.nu; ++u) {
        for (int w : {0, 1}) {
          const std::int64_t p1 = t.pw1[t.assignment_index(g, x, u)];
          const std::int64_t nw = w == 1 ? p1 : t.pw_den - p1;
          for (std::size_t v = 0; v < t.nv; ++v) {
            const std::int64_t count = t.px[x] * ng * t.pu[x * t.nu + u] * nw * t.pv[v];
            if (count == 0) continue;
            DgpAtom a{g,
                      x,
                      u,
                      v,
                      w,
                      t.ys[t.outcome_index(0, x, u)],
                      t.ys[t.outcome_index(1, x, u)],
                      t.yp[t.outcome_index(0, x, u)] + t.v_values[v],
                      t.yp[t.outcome_index(1, x, u)] + t.v_values[v],
                      static_cast<double>(count) / total,
                      count};
            atoms.push_back(a);
          }
        }
      }
    }
  }
  return atoms;
}

// E[Y^P(1) - Y^P(0) | G=O] from the potential-outcome columns.
inline double potential_outcome_tau(const DiscreteDgpTable& t) {
  double num = 0.0, den = 0.0;
  for (const auto& a : joint_table(t)) {
    if (a.group != Group::Observational) continue;
    num += a.probability * (a.yp1 - a.yp0);
    den += a.probability;
  }
  if (den <= 0.0) throw EstimationError("observational group has zero probability");
  return num / den;
}

struct OracleResult {
  double identified = 0.0; // from the observable distribution only
  double truth = 0.0;      // from the potential outcomes
};

// tau = sum_x P(x|O) [k_1(x) - k_0(x)], with
//   h_w(y, x) = E[Y^P | Y^S=y, W=w, X=x, G=O]
//   k_w(x)    = E[h_w(Y^S, x) | W=w, X=x, G=E]
// computed by exact summation over the observable joint distribution of (G, X, W, Y^S, Y^P 1{G=O}).
inline OracleResult identification_oracle(const DiscreteDgpTable& t) {
  const auto atoms = joint_table(t);
  // Observables only from here on.
  std::map<std::tuple<int, std::size_t, double>, std::pair<double, double>> h; // (w,x,y) -> (sum p*yp, sum p)
  std::map<std::pair<int, std::size_t>, std::pair<double, double>> k;        // (w,x) -> (sum p*h, sum p)
  std::vector<double> px_obs(t.nx, 0.0);
  double p_obs = 0.0;
  for (const auto& a : atoms) {
    if (a.group != Group::Observational) continue;
    auto& cell = h[{a.w, a.x, a.observed_secondary()}];
    cell.first += a.probability * a.observed_primary();
    cell.second += a.probability;
    px_obs[a.x] += a.probability;
    p_obs += a.probability;
  }
  for (const auto& a : atoms) {
    if (a.group != Group::Experimental) continue;
    const auto it = h.find({a.w, a.x, a.observed_secondary()});
    if (it == h.end() || it->second.second <= 0.0)
      throw EstimationError("positivity violation: experimental (w=" + std::to_string(a.w) + ", x=" +
                            std::to_string(a.x) + ", y_s=" + detail::format_double(a.observed_secondary()) +
                            ") has no observational counterpart");
    auto& cell = k[{a.w, a.x}];
    cell.first += a.probability * (it->second.first / it->second.second);
    cell.second += a.probability;
  }
  OracleResult out;
  for (std::size_t x = 0; x < t.nx; ++x) {
    if (px_obs[x] <= 0.0) continue;
    double diff = 0.0;
    for (int w : {0, 1}) {
      const auto it = k.find({w, x});
      if (it == k.end() || it->second.second <= 0.0)
        throw EstimationError("positivity violation: no experimental units with w=" + std::to_string(w) +
                              ", x=" + std::to_string(x));
      diff += (w == 1 ? 1.0 : -1.0) * it->second.first / it->second.second;
    }
    out.identified += px_obs[x] / p_obs * diff;
  }
  out.truth = potential_outcome_tau(t);
  return out;
}

// The full finite population: each atom repeated `count` times, so empirical frequencies equal
// the table exactly. X is one categorical covariate and the secondary outcome is declared discrete.
inline CombinedSample population_sample(const DiscreteDgpTable& t) {
  Schema schema;
  schema.discrete_secondary = true;
  CovariateSpec x{"x", CovariateType::Categorical, {}};
  for (std::size_t i = 0; i < t.nx; ++i) x.levels.push_back(std::to_string(i));
  schema.covariates.push_back(std::move(x));
  std::vector<Unit> units;
  units.reserve(static_cast<std::size_t>(t.population_size()));
  for (const auto& a : joint_table(t)) {
    Unit u;
    u.group = a.group;
    u.treatment = a.w;
    u.covariates = {static_cast<double>(a.x)};
    u.secondary = a.observed_secondary();
    if (a.group == Group::Observational) u.primary = a.observed_primary();
    units.insert(units.end(), static_cast<std::size_t>(a.count), u);
  }
  return CombinedSample::create(std::move(schema), std::move(units));
}

} // namespace ltfuse
