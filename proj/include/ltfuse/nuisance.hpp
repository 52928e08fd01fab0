#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ltfuse/data_model.hpp"

namespace ltfuse {

enum class NuisanceKind : std::uint8_t {
  ConditionalMeanKappa, // E[Y^P | W, X, Y^S, G=O]
  ConditionalMeanGamma, // E[Y^P | W, eta, X, G=O]
  SelectionOddsR,       // pr(G=O | X)
  PropensityE,          // pr(W=1 | X, G=g)
  DensityRatioLambda,   // f(W,Y^S | X, E) / f(W,Y^S | X, O)
  ConditionalCdfEta,    // F(Y^S | W, X, E)
};

enum class NuisanceMethod : std::uint8_t { FrequencyTable, KNearestNeighbor, Binning };

inline const char* to_string(NuisanceMethod m) {
  switch (m) {
  case NuisanceMethod::FrequencyTable: return "frequency";
  case NuisanceMethod::KNearestNeighbor: return "knn";
  case NuisanceMethod::Binning: return "binning";
  }
  return "?";
}

inline const char* to_string(NuisanceKind k) {
  switch (k) {
  case NuisanceKind::ConditionalMeanKappa: return "kappa";
  case NuisanceKind::ConditionalMeanGamma: return "gamma";
  case NuisanceKind::SelectionOddsR: return "selection_odds";
  case NuisanceKind::PropensityE: return "propensity";
  case NuisanceKind::DensityRatioLambda: return "density_ratio";
  case NuisanceKind::ConditionalCdfEta: return "control_variable";
  }
  return "?";
}

struct NuisanceOptions {
  NuisanceMethod method = NuisanceMethod::FrequencyTable;
  std::optional<std::size_t> k; // nearest neighbours; default ceil(n^{4/5}) within arm
  std::size_t bins = 20;        // equal-mass bins for a continuous secondary outcome
  double trim = 0.01;           // probabilities clamped to [trim, 1 - trim]
};

// A nuisance evaluation, flagged when trimming changed it.
struct Evaluation {
  double value = 0.0;
  bool trimmed = false;
};

inline std::size_t default_neighbors(std::size_t n) {
  return static_cast<std::size_t>(std::ceil(std::pow(static_cast<double>(n), 0.8)));
}

// Interior edges at the j/bins empirical quantiles; duplicates collapse so heavy ties yield fewer bins.
inline std::vector<double> equal_mass_edges(std::vector<double> values, std::size_t bins) {
  std::vector<double> edges;
  if (values.empty() || bins <= 1) return edges;
  std::sort(values.begin(), values.end());
  for (std::size_t j = 1; j < bins; ++j) {
    const double e = values[std::min(values.size() - 1, j * values.size() / bins)];
    if (edges.empty() || e > edges.back()) edges.push_back(e);
  }
  return edges;
}

// Equal-mass edges over `pooled`, thinned so that every bin holds at least one `required` value.
inline std::vector<double> covering_edges(std::vector<double> pooled, std::vector<double> required, std::size_t bins) {
  std::sort(required.begin(), required.end());
  std::vector<double> kept;
  double prev = -std::numeric_limits<double>::infinity();
  for (double e : equal_mass_edges(std::move(pooled), bins)) {
    const auto lo = std::lower_bound(required.begin(), required.end(), prev);
    const auto mid = std::lower_bound(required.begin(), required.end(), e);
    if (mid != lo && mid != required.end()) {
      kept.push_back(e);
      prev = e;
    }
  }
  return kept;
}

namespace detail {

// Splits covariates into the exact-match part (categorical levels) and standardized continuous features.
class FeatureMap {
public:
  FeatureMap() = default;
  FeatureMap(const CombinedSample& sample, std::span<const std::size_t> rows) {
    const auto& covs = sample.schema().covariates;
    for (std::size_t j = 0; j < covs.size(); ++j) {
      if (covs[j].type == CovariateType::Categorical) {
        categorical_.push_back(j);
        continue;
      }
      continuous_.push_back(j);
      std::vector<double> v;
      v.reserve(rows.size());
      for (auto i : rows) v.push_back(sample[i].covariates[j]);
      const auto [mean, sd] = moments(v);
      center_.push_back(mean);
      scale_.push_back(sd);
    }
  }

  static std::pair<double, double> moments(const std::vector<double>& v) {
    if (v.empty()) return {0.0, 1.0};
    const double mean = pairwise_mean(v);
    std::vector<double> sq;
    sq.reserve(v.size());
    for (double x : v) sq.push_back((x - mean) * (x - mean));
    const double sd = std::sqrt(pairwise_sum(sq) / static_cast<double>(v.size()));
    return {mean, sd > 0.0 ? sd : 1.0};
  }

  std::vector<double> key(const std::vector<double>& x) const {
    std::vector<double> k;
    k.reserve(categorical_.size());
    for (auto j : categorical_) k.push_back(x[j]);
    return k;
  }

  void features(const std::vector<double>& x, std::vector<double>& out) const {
    for (std::size_t c = 0; c < continuous_.size(); ++c) out.push_back((x[continuous_[c]] - center_[c]) / scale_[c]);
  }

  std::size_t dimension() const { return continuous_.size(); }

private:
  std::vector<std::size_t> categorical_, continuous_;
  std::vector<double> center_, scale_;
};

// Brute-force neighbour search within buckets that share an exact key.
class NeighborIndex {
public:
  void add(const std::vector<double>& key, std::span<const double> point, double value) {
    auto& b = buckets_[key];
    b.points.insert(b.points.end(), point.begin(), point.end());
    b.values.push_back(value);
    b.dim = point.size();
  }

  // Values of the k nearest points sharing `key`; every point tied with the k-th distance is
  // included, which makes the result independent of insertion order. Empty if the key is unseen.
  std::vector<double> nearest(const std::vector<double>& key, std::span<const double> point, std::size_t k) const {
    const auto it = buckets_.find(key);
    if (it == buckets_.end()) return {};
    const Bucket& b = it->second;
    const std::size_t n = b.values.size();
    if (k >= n || b.dim == 0) return b.values;
    std::vector<double> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
      double d = 0.0;
      for (std::size_t c = 0; c < b.dim; ++c) {
        const double diff = b.points[i * b.dim + c] - point[c];
        d += diff * diff;
      }
      dist[i] = d;
    }
    std::vector<double> sorted = dist;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
    const double cutoff = sorted[k - 1];
    std::vector<double> out;
    out.reserve(k);
    for (std::size_t i = 0; i < n; ++i)
      if (dist[i] <= cutoff) out.push_back(b.values[i]);
    return out;
  }

private:
  struct Bucket {
    std::vector<double> points;
    std::vector<double> values;
    std::size_t dim = 0;
  };
  std::map<std::vector<double>, Bucket> buckets_;
};

inline std::string cell_text(const Schema& schema, int w, const std::vector<double>& x) {
  return "w=" + std::to_string(w) + ", " + describe_covariates(schema, x);
}

inline void require_categorical(const CombinedSample& sample, NuisanceKind kind, NuisanceMethod method) {
  if (!sample.schema().all_categorical())
    throw ValidationError(std::string(to_string(kind)) + ": method '" + to_string(method) +
                          "' needs categorical covariates; use knn for continuous covariates");
}

// Bin edges per (w, x) cell: equal mass over both groups' values in the cell, thinned so every
// bin contains an observational unit. Values outside the observed range fall in the end bins.
using CellEdges = std::map<std::pair<int, std::vector<double>>, std::vector<double>>;

inline CellEdges cell_edges(const CombinedSample& sample, std::span<const double> values, std::size_t bins) {
  if (bins == 0) throw ValidationError("bin count must be at least 1");
  std::map<std::pair<int, std::vector<double>>, std::array<std::vector<double>, 2>> pooled;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const Unit& u = sample[i];
    auto& cell = pooled[{u.treatment, u.covariates}];
    cell[0].push_back(values[i]);
    if (u.group == Group::Observational) cell[1].push_back(values[i]);
  }
  CellEdges out;
  for (auto& [key, v] : pooled) out.emplace(key, covering_edges(std::move(v[0]), std::move(v[1]), bins));
  return out;
}

inline std::size_t cell_bin(const CellEdges& edges, int w, const std::vector<double>& x, double v) {
  const auto it = edges.find({w, x});
  return it == edges.end() ? 0 : bin_index(it->second, v);
}

} // namespace detail

// ---------------------------------------------------------------------------
// Conditional mean of the primary outcome in the observational group given (W, X, extra),
// where extra is Y^S (kappa) or the control variable eta (gamma).

class ConditionalMeanFit {
public:
  NuisanceKind kind = NuisanceKind::ConditionalMeanKappa;
  NuisanceOptions options;
  Warnings warnings;

  // `extra` is indexed by sample position; only observational entries are read.
  static ConditionalMeanFit fit(const CombinedSample& sample, std::span<const double> extra, NuisanceKind kind,
                                const NuisanceOptions& options) {
    ConditionalMeanFit f;
    f.kind = kind;
    f.options = options;
    f.schema_ = sample.schema();
    const auto rows = sample.indices(Group::Observational);
    switch (options.method) {
    case NuisanceMethod::FrequencyTable:
      detail::require_categorical(sample, kind, options.method);
      if (kind == NuisanceKind::ConditionalMeanKappa && !sample.schema().discrete_secondary)
        throw ValidationError("kappa: frequency tables need a secondary outcome declared discrete; use binning or knn");
      [[fallthrough]];
    case NuisanceMethod::Binning: {
      detail::require_categorical(sample, kind, options.method);
      if (options.method == NuisanceMethod::Binning) f.edges_ = detail::cell_edges(sample, extra, options.bins);
      std::map<CellId, std::vector<double>> cells;
      for (auto i : rows) cells[f.cell(sample[i].treatment, sample[i].covariates, extra[i])].push_back(*sample[i].primary);
      for (auto& [id, values] : cells) f.table_.emplace(id, pairwise_mean(values));
      break;
    }
    case NuisanceMethod::KNearestNeighbor: {
      f.features_ = detail::FeatureMap(sample, rows);
      std::vector<double> ex;
      for (auto i : rows) ex.push_back(extra[i]);
      std::tie(f.extra_center_, f.extra_scale_) = detail::FeatureMap::moments(ex);
      std::array<std::size_t, 2> arm{};
      std::vector<double> point;
      for (auto i : rows) {
        const Unit& u = sample[i];
        ++arm[u.treatment];
        f.point(u.covariates, extra[i], point);
        f.index_.add(f.knn_key(u.treatment, u.covariates), point, *u.primary);
      }
      for (int w = 0; w < 2; ++w) {
        const std::size_t k = options.k.value_or(default_neighbors(arm[w]));
        if (k == 0) throw ValidationError("k must be at least 1");
        if (k > arm[w])
          throw ValidationError(std::string(to_string(kind)) + ": k=" + std::to_string(k) + " exceeds arm size " +
                                std::to_string(arm[w]) + " (w=" + std::to_string(w) + ")");
        f.k_[w] = k;
      }
      break;
    }
    }
    return f;
  }

  double evaluate(int w, const std::vector<double>& x, double extra) const {
    if (options.method == NuisanceMethod::KNearestNeighbor) {
      std::vector<double> point;
      this->point(x, extra, point);
      const auto values = index_.nearest(knn_key(w, x), point, k_[w]);
      if (values.empty())
        throw EstimationError(std::string(to_string(kind)) + ": no observational neighbours in cell (" +
                              detail::cell_text(schema_, w, x) + ")");
      return pairwise_mean(values);
    }
    const auto it = table_.find(cell(w, x, extra));
    if (it == table_.end())
      throw EstimationError(std::string(to_string(kind)) + ": empty observational cell (" +
                            detail::cell_text(schema_, w, x) + ", " + extra_name() + "=" +
                            detail::format_double(extra) + ")");
    return it->second;
  }

  std::size_t neighbors(int w) const { return k_[w]; }

private:
  using CellId = std::tuple<int, std::vector<double>, double>;

  CellId cell(int w, const std::vector<double>& x, double extra) const {
    if (options.method == NuisanceMethod::Binning) return {w, x, static_cast<double>(detail::cell_bin(edges_, w, x, extra))};
    return {w, x, extra};
  }

  std::vector<double> knn_key(int w, const std::vector<double>& x) const {
    auto key = features_.key(x);
    key.push_back(w);
    return key;
  }

  void point(const std::vector<double>& x, double extra, std::vector<double>& out) const {
    out.clear();
    features_.features(x, out);
    out.push_back((extra - extra_center_) / extra_scale_);
  }

  std::string extra_name() const { return kind == NuisanceKind::ConditionalMeanKappa ? "y_s" : "eta"; }

  Schema schema_;
  detail::CellEdges edges_;
  std::map<CellId, double> table_;
  detail::FeatureMap features_;
  detail::NeighborIndex index_;
  double extra_center_ = 0.0, extra_scale_ = 1.0;
  std::array<std::size_t, 2> k_{};
};

inline ConditionalMeanFit fit_kappa(const CombinedSample& sample, const NuisanceOptions& options) {
  std::vector<double> ys;
  ys.reserve(sample.size());
  for (const Unit& u : sample.units()) ys.push_back(u.secondary);
  return ConditionalMeanFit::fit(sample, ys, NuisanceKind::ConditionalMeanKappa, options);
}

// ---------------------------------------------------------------------------
// Binary-label probability given X: selection r(x) = pr(G=O | x) or propensity e(x, g).

class ProbabilityFit {
public:
  NuisanceKind kind = NuisanceKind::SelectionOddsR;
  NuisanceOptions options;
  Warnings warnings;

  Evaluation evaluate(const std::vector<double>& x) const {
    double p = 0.0;
    if (options.method == NuisanceMethod::KNearestNeighbor) {
      std::vector<double> point;
      features_.features(x, point);
      const auto labels = index_.nearest(features_.key(x), point, k_);
      if (labels.empty()) throw EstimationError(std::string(to_string(kind)) + ": no neighbours in covariate cell (" +
                                                describe_covariates(schema_, x) + ")");
      p = pairwise_mean(labels);
      if (p <= 0.0 && kind == NuisanceKind::SelectionOddsR)
        throw EstimationError("selection_odds: no observational neighbours near (" + describe_covariates(schema_, x) +
                              "); common-support violation");
    } else {
      const auto it = table_.find(x);
      if (it == table_.end())
        throw EstimationError(std::string(to_string(kind)) + ": covariate cell (" + describe_covariates(schema_, x) +
                              ") is absent from the fitting sample");
      p = it->second;
    }
    const double lo = options.trim, hi = 1.0 - options.trim;
    if (p < lo) return {lo, true};
    if (p > hi) return {hi, true};
    return {p, false};
  }

  // r / (1 - r)
  Evaluation odds(const std::vector<double>& x) const {
    const Evaluation r = evaluate(x);
    return {r.value / (1.0 - r.value), r.trimmed};
  }

  // `label(u)` in {0,1}; `rows` are the units the probability is estimated from.
  template <class Label>
  static ProbabilityFit fit(const CombinedSample& sample, std::span<const std::size_t> rows, Label label,
                            NuisanceKind kind, const NuisanceOptions& options) {
    if (!(options.trim > 0.0 && options.trim < 0.5)) throw ValidationError("trimming bound must lie in (0, 0.5)");
    ProbabilityFit f;
    f.kind = kind;
    f.options = options;
    f.schema_ = sample.schema();
    if (options.method == NuisanceMethod::KNearestNeighbor) {
      f.features_ = detail::FeatureMap(sample, rows);
      std::vector<double> point;
      for (auto i : rows) {
        point.clear();
        f.features_.features(sample[i].covariates, point);
        f.index_.add(f.features_.key(sample[i].covariates), point, label(sample[i]));
      }
      f.k_ = options.k.value_or(default_neighbors(rows.size()));
      if (f.k_ == 0 || f.k_ > rows.size())
        throw ValidationError(std::string(to_string(kind)) + ": k=" + std::to_string(f.k_) + " must lie in [1, " +
                              std::to_string(rows.size()) + "]");
      return f;
    }
    detail::require_categorical(sample, kind, options.method);
    std::map<std::vector<double>, std::vector<double>> cells;
    for (auto i : rows) cells[sample[i].covariates].push_back(label(sample[i]));
    for (auto& [x, labels] : cells) {
      const double p = pairwise_mean(labels);
      if (kind == NuisanceKind::SelectionOddsR && p <= 0.0)
        throw EstimationError("selection_odds: covariate cell (" + describe_covariates(f.schema_, x) +
                              ") appears only in the experimental group; common-support violation");
      if (p < options.trim || p > 1.0 - options.trim)
        f.warnings.push_back({"trimmed", std::string(to_string(kind)) + " estimate " + detail::format_double(p) +
                                             " in cell (" + describe_covariates(f.schema_, x) + ") clamped to [" +
                                             detail::format_double(options.trim) + ", " +
                                             detail::format_double(1.0 - options.trim) + "]"});
      f.table_.emplace(x, p);
    }
    return f;
  }

private:
  Schema schema_;
  std::map<std::vector<double>, double> table_;
  detail::FeatureMap features_;
  detail::NeighborIndex index_;
  std::size_t k_ = 0;
};

inline ProbabilityFit fit_selection_odds(const CombinedSample& sample, const NuisanceOptions& options) {
  if (sample.count(Group::Experimental) == 0 || sample.count(Group::Observational) == 0)
    throw ValidationError("selection odds need both groups");
  std::vector<std::size_t> rows(sample.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return ProbabilityFit::fit(
      sample, rows, [](const Unit& u) { return u.group == Group::Observational ? 1.0 : 0.0; },
      NuisanceKind::SelectionOddsR, options);
}

inline ProbabilityFit fit_propensity(const CombinedSample& sample, Group g, const NuisanceOptions& options) {
  const auto rows = sample.indices(g);
  if (rows.empty()) throw ValidationError(std::string("propensity: no units in group ") + group_code(g));
  return ProbabilityFit::fit(
      sample, rows, [](const Unit& u) { return static_cast<double>(u.treatment); }, NuisanceKind::PropensityE,
      options);
}

// ---------------------------------------------------------------------------
// lambda(w, x, y) = f(w, y | x, E) / f(w, y | x, O)

class DensityRatioFit {
public:
  NuisanceOptions options;
  Warnings warnings;

  static DensityRatioFit fit(const CombinedSample& sample, const NuisanceOptions& options) {
    DensityRatioFit f;
    f.options = options;
    f.schema_ = sample.schema();
    if (options.method == NuisanceMethod::KNearestNeighbor) {
      f.fit_knn(sample);
      return f;
    }
    detail::require_categorical(sample, NuisanceKind::DensityRatioLambda, options.method);
    if (options.method == NuisanceMethod::FrequencyTable && !sample.schema().discrete_secondary)
      throw ValidationError("density_ratio: frequency tables need a secondary outcome declared discrete; use binning");
    if (options.method == NuisanceMethod::Binning) {
      std::vector<double> ys;
      for (const Unit& u : sample.units()) ys.push_back(u.secondary);
      f.edges_ = detail::cell_edges(sample, ys, options.bins);
    }
    for (const Unit& u : sample.units()) {
      const int g = u.group == Group::Observational;
      ++f.x_counts_[u.covariates][g];
      ++f.joint_counts_[f.cell(u.treatment, u.covariates, u.secondary)][g];
    }
    for (const auto& [id, counts] : f.joint_counts_) {
      if (counts[1] > 0 && counts[0] == 0)
        f.warnings.push_back({"zero_weight_cell", "observational cell (" +
                                                      detail::cell_text(f.schema_, std::get<0>(id), std::get<1>(id)) +
                                                      ", y_s" + (f.edges_.empty() ? "=" : " bin=") +
                                                      detail::format_double(std::get<2>(id)) +
                                                      ") has no experimental counterpart; weight set to 0"});
    }
    return f;
  }

  Evaluation evaluate(int w, const std::vector<double>& x, double y) const {
    if (options.method == NuisanceMethod::KNearestNeighbor) return evaluate_knn(w, x, y);
    const auto xc = x_counts_.find(x);
    if (xc == x_counts_.end() || xc->second[1] == 0)
      throw EstimationError("density_ratio: covariate cell (" + describe_covariates(schema_, x) +
                            ") has no observational units");
    if (xc->second[0] == 0)
      throw EstimationError("density_ratio: covariate cell (" + describe_covariates(schema_, x) +
                            ") has no experimental units; common-support violation");
    const auto jc = joint_counts_.find(cell(w, x, y));
    if (jc == joint_counts_.end() || jc->second[1] == 0)
      throw EstimationError("density_ratio: zero observational frequency in cell (" + detail::cell_text(schema_, w, x) +
                            ")");
    const double fe = static_cast<double>(jc->second[0]) / static_cast<double>(xc->second[0]);
    const double fo = static_cast<double>(jc->second[1]) / static_cast<double>(xc->second[1]);
    return {fe / fo, false};
  }

private:
  using CellId = std::tuple<int, std::vector<double>, double>;

  CellId cell(int w, const std::vector<double>& x, double y) const {
    if (options.method == NuisanceMethod::Binning) return {w, x, static_cast<double>(detail::cell_bin(edges_, w, x, y))};
    return {w, x, y};
  }

  // Bayes-rule form: lambda = [P(E|w,y,x) / P(O|w,y,x)] * [P(O|x) / P(E|x)], each estimated by
  // nearest-neighbour class frequencies in the pooled sample.
  void fit_knn(const CombinedSample& sample) {
    std::vector<std::size_t> all(sample.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    features_ = detail::FeatureMap(sample, all);
    std::vector<double> ys;
    for (const Unit& u : sample.units()) ys.push_back(u.secondary);
    std::tie(y_center_, y_scale_) = detail::FeatureMap::moments(ys);
    std::array<std::size_t, 2> arm{};
    std::vector<double> point;
    for (const Unit& u : sample.units()) {
      const double is_e = u.group == Group::Experimental ? 1.0 : 0.0;
      ++arm[u.treatment];
      joint_point(u.covariates, u.secondary, point);
      auto key = features_.key(u.covariates);
      key.push_back(u.treatment);
      joint_index_.add(key, point, is_e);
    }
    for (int w = 0; w < 2; ++w) {
      k_[w] = options.k.value_or(default_neighbors(arm[w]));
      if (k_[w] == 0 || k_[w] > arm[w])
        throw ValidationError("density_ratio: k=" + std::to_string(k_[w]) + " exceeds arm size " +
                              std::to_string(arm[w]));
    }
    NuisanceOptions r_options = options;
    selection_ = std::make_shared<ProbabilityFit>(fit_selection_odds(sample, r_options));
  }

  void joint_point(const std::vector<double>& x, double y, std::vector<double>& out) const {
    out.clear();
    features_.features(x, out);
    out.push_back((y - y_center_) / y_scale_);
  }

  Evaluation evaluate_knn(int w, const std::vector<double>& x, double y) const {
    std::vector<double> point;
    joint_point(x, y, point);
    auto key = features_.key(x);
    key.push_back(w);
    const auto labels = joint_index_.nearest(key, point, k_[w]);
    if (labels.empty())
      throw EstimationError("density_ratio: no neighbours in cell (" + detail::cell_text(schema_, w, x) + ")");
    const double pe = pairwise_mean(labels);
    if (pe >= 1.0)
      throw EstimationError("density_ratio: zero observational frequency near (" + detail::cell_text(schema_, w, x) +
                            ")");
    const Evaluation odds_o = selection_->odds(x);
    return {pe / (1.0 - pe) * odds_o.value, odds_o.trimmed};
  }

  Schema schema_;
  detail::CellEdges edges_;
  std::map<std::vector<double>, std::array<std::size_t, 2>> x_counts_; // [E, O]
  std::map<CellId, std::array<std::size_t, 2>> joint_counts_;
  detail::FeatureMap features_;
  detail::NeighborIndex joint_index_;
  std::shared_ptr<ProbabilityFit> selection_;
  double y_center_ = 0.0, y_scale_ = 1.0;
  std::array<std::size_t, 2> k_{};
};

inline DensityRatioFit fit_density_ratio(const CombinedSample& sample, const NuisanceOptions& options) {
  return DensityRatioFit::fit(sample, options);
}

// ---------------------------------------------------------------------------
// eta = F(Y^S | W, X, E): right-continuous empirical CDF of the experimental secondary outcome
// within (W, X) cells; with continuous covariates the cell is the k nearest experimental units.

class ControlVariableFit {
public:
  NuisanceOptions options;
  Warnings warnings;
  std::vector<double> eta; // per sample unit; experimental units get their own within-cell rank

  static ControlVariableFit fit(const CombinedSample& sample, const NuisanceOptions& options) {
    ControlVariableFit f;
    f.options = options;
    f.schema_ = sample.schema();
    const auto rows = sample.indices(Group::Experimental);
    if (options.method == NuisanceMethod::KNearestNeighbor) {
      f.features_ = detail::FeatureMap(sample, rows);
      std::array<std::size_t, 2> arm{};
      std::vector<double> point;
      for (auto i : rows) {
        const Unit& u = sample[i];
        ++arm[u.treatment];
        point.clear();
        f.features_.features(u.covariates, point);
        f.index_.add(f.key(u.treatment, u.covariates), point, u.secondary);
      }
      for (int w = 0; w < 2; ++w) {
        f.k_[w] = options.k.value_or(default_neighbors(arm[w]));
        if (f.k_[w] == 0 || f.k_[w] > arm[w])
          throw ValidationError("control_variable: k=" + std::to_string(f.k_[w]) + " exceeds experimental arm size " +
                                std::to_string(arm[w]));
      }
    } else {
      detail::require_categorical(sample, NuisanceKind::ConditionalCdfEta, options.method);
      for (auto i : rows) f.cells_[{sample[i].treatment, sample[i].covariates}].push_back(sample[i].secondary);
      for (auto& [id, values] : f.cells_) std::sort(values.begin(), values.end());
    }
    f.eta.resize(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i)
      f.eta[i] = f.evaluate(sample[i].treatment, sample[i].covariates, sample[i].secondary);
    return f;
  }

  double evaluate(int w, const std::vector<double>& x, double y) const {
    if (options.method == NuisanceMethod::KNearestNeighbor) {
      std::vector<double> point;
      features_.features(x, point);
      const auto values = index_.nearest(key(w, x), point, k_[w]);
      if (values.empty()) throw empty_cell(w, x);
      const auto below = std::count_if(values.begin(), values.end(), [y](double v) { return v <= y; });
      return static_cast<double>(below) / static_cast<double>(values.size());
    }
    const auto it = cells_.find({w, x});
    if (it == cells_.end()) throw empty_cell(w, x);
    const auto& sorted = it->second;
    const auto below = std::upper_bound(sorted.begin(), sorted.end(), y) - sorted.begin();
    return static_cast<double>(below) / static_cast<double>(sorted.size());
  }

private:
  std::vector<double> key(int w, const std::vector<double>& x) const {
    auto k = features_.key(x);
    k.push_back(w);
    return k;
  }

  EstimationError empty_cell(int w, const std::vector<double>& x) const {
    return EstimationError("control_variable: empty experimental cell (" + detail::cell_text(schema_, w, x) + ")");
  }

  Schema schema_;
  std::map<std::pair<int, std::vector<double>>, std::vector<double>> cells_;
  detail::FeatureMap features_;
  detail::NeighborIndex index_;
  std::array<std::size_t, 2> k_{};
};

inline ControlVariableFit fit_control_variable(const CombinedSample& sample, const NuisanceOptions& options) {
  return ControlVariableFit::fit(sample, options);
}

// gamma(w, eta, x), fitted on observational units with their control-variable values.
inline ConditionalMeanFit fit_gamma(const CombinedSample& sample, const ControlVariableFit& eta,
                                    const NuisanceOptions& options) {
  return ConditionalMeanFit::fit(sample, eta.eta, NuisanceKind::ConditionalMeanGamma, options);
}

} // namespace ltfuse
