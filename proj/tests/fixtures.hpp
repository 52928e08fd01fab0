#pragma once

#include <optional>
#include <random>
#include <vector>

#include "ltfuse.hpp"

namespace fixtures {

using ltfuse::CombinedSample;
using ltfuse::Group;
using ltfuse::Schema;
using ltfuse::Unit;

inline Unit unit(Group g, int w, double ys, std::optional<double> yp = std::nullopt, std::vector<double> x = {}) {
  Unit u;
  u.group = g;
  u.treatment = w;
  u.secondary = ys;
  u.primary = yp;
  u.covariates = std::move(x);
  return u;
}

inline Schema binary_schema() {
  Schema s;
  s.discrete_secondary = true;
  return s;
}

// Four observational and four experimental units; every estimation path gives 0.5.
inline CombinedSample hand_fixture() {
  const auto E = Group::Experimental;
  const auto O = Group::Observational;
  return CombinedSample::create(binary_schema(), {unit(O, 1, 1, 1), unit(O, 1, 0, 0), unit(O, 0, 1, 1), unit(O, 0, 0, 0),
                                                  unit(E, 1, 1), unit(E, 1, 0), unit(E, 0, 0), unit(E, 0, 0)});
}

// Random covariate-free binary sample with (g,w) cell sizes in [1, 50]. Redrawn until every
// (w, s) combination present in E has an observational counterpart.
inline CombinedSample random_binary_sample(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(1, 50);
  std::uniform_real_distribution<double> prob(0.0, 1.0);
  for (;;) {
    std::vector<Unit> units;
    for (Group g : {Group::Experimental, Group::Observational}) {
      for (int w : {0, 1}) {
        const int n = size(rng);
        const double ps = prob(rng);
        const double p0 = prob(rng), p1 = prob(rng);
        for (int i = 0; i < n; ++i) {
          const double s = prob(rng) < ps ? 1.0 : 0.0;
          std::optional<double> y;
          if (g == Group::Observational) y = prob(rng) < (s == 1.0 ? p1 : p0) ? 1.0 : 0.0;
          units.push_back(unit(g, w, s, y));
        }
      }
    }
    bool ok = true;
    for (int w : {0, 1})
      for (int s : {0, 1}) {
        bool in_e = false, in_o = false;
        for (const auto& u : units) {
          if (u.treatment != w || u.secondary != s) continue;
          (u.group == Group::Experimental ? in_e : in_o) = true;
        }
        if (in_e && !in_o) ok = false;
      }
    if (ok) return CombinedSample::create(binary_schema(), std::move(units));
  }
}

} // namespace fixtures
