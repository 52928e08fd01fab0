#pragma once

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "ltfuse/data_model.hpp"

namespace ltfuse {

struct Design {
  std::vector<std::string> names;
  Eigen::MatrixXd x;
};

// Least-squares fit with heteroskedasticity-robust (HC1) standard errors.
struct OlsFit {
  std::vector<std::string> names;
  Eigen::VectorXd coefficients;
  Eigen::VectorXd robust_se;
  Eigen::MatrixXd robust_cov;
  Eigen::VectorXd residuals;
  std::size_t n = 0;
  double r_squared = 0.0;

  std::size_t index(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw std::out_of_range("no design column named " + std::string(name));
  }
  double coef(std::string_view name) const { return coefficients[static_cast<Eigen::Index>(index(name))]; }
  double se(std::string_view name) const { return robust_se[static_cast<Eigen::Index>(index(name))]; }
};

inline OlsFit ols(const Eigen::VectorXd& y, const Design& design) {
  const Eigen::MatrixXd& x = design.x;
  const auto n = x.rows();
  const auto k = x.cols();
  if (y.size() != n) throw std::invalid_argument("response length does not match design rows");
  if (n <= k)
    throw EstimationError("regression needs more rows than columns: n=" + std::to_string(n) +
                          ", columns=" + std::to_string(k));

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < k) {
    // Columns with weight in some null-space direction take part in a dependency.
    Eigen::FullPivLU<Eigen::MatrixXd> lu(x.transpose() * x);
    lu.setThreshold(1e-10);
    const Eigen::MatrixXd null = lu.kernel();
    std::string dependent;
    for (Eigen::Index j = 0; j < k; ++j) {
      if (null.row(j).cwiseAbs().maxCoeff() <= 1e-8 * null.cwiseAbs().maxCoeff()) continue;
      if (!dependent.empty()) dependent += ", ";
      dependent += design.names[static_cast<std::size_t>(j)];
    }
    throw EstimationError("rank-deficient design (rank " + std::to_string(qr.rank()) + " of " + std::to_string(k) +
                          "); linearly dependent column(s): " + dependent);
  }

  OlsFit fit;
  fit.names = design.names;
  fit.n = static_cast<std::size_t>(n);
  fit.coefficients = qr.solve(y);
  fit.residuals = y - x * fit.coefficients;

  const double ssr = fit.residuals.squaredNorm();
  const double sst = (y.array() - y.mean()).matrix().squaredNorm();
  fit.r_squared = sst > 0.0 ? 1.0 - ssr / sst : 0.0;

  // (X'X)^{-1} = P R^{-1} R^{-T} P'
  const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
  const Eigen::MatrixXd r_inv =
      r.template triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd bread_perm = r_inv * r_inv.transpose();
  const auto& p = qr.colsPermutation();
  const Eigen::MatrixXd bread = p * bread_perm * p.transpose();
  const Eigen::MatrixXd xe = x.array().colwise() * fit.residuals.array();
  const Eigen::MatrixXd meat = xe.transpose() * xe;
  fit.robust_cov = bread * meat * bread * (static_cast<double>(n) / static_cast<double>(n - k));
  fit.robust_se = fit.robust_cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return fit;
}

struct WaldTest {
  double statistic = 0.0;
  std::size_t df = 0;
  double p_value = 1.0;
};

inline double normal_two_sided_p(double z) {
  if (!std::isfinite(z)) return 0.0;
  return 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), std::abs(z)));
}

inline double chi_squared_sf(double x, std::size_t df) {
  if (x <= 0.0) return 1.0;
  if (!std::isfinite(x)) return 0.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(static_cast<double>(df)), x));
}

// Robust Wald test that the named coefficients are jointly zero.
inline WaldTest wald_test(const OlsFit& fit, const std::vector<std::string>& block) {
  const auto m = static_cast<Eigen::Index>(block.size());
  Eigen::VectorXd b(m);
  Eigen::MatrixXd v(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto ii = static_cast<Eigen::Index>(fit.index(block[static_cast<std::size_t>(i)]));
    b[i] = fit.coefficients[ii];
    for (Eigen::Index j = 0; j < m; ++j)
      v(i, j) = fit.robust_cov(ii, static_cast<Eigen::Index>(fit.index(block[static_cast<std::size_t>(j)])));
  }
  WaldTest t;
  t.df = block.size();
  t.statistic = b.dot(v.ldlt().solve(b));
  t.p_value = chi_squared_sf(t.statistic, t.df);
  return t;
}

// ---------------------------------------------------------------------------
// Design construction from sample rows

struct DesignSpec {
  bool intercept = true;
  bool treatment = true;
  bool covariates = true;
  bool group_indicator = false;    // 1 for observational units
  bool treatment_by_group = false; // treatment x group indicator
  std::vector<std::pair<std::string, std::vector<double>>> extra; // aligned to the selected rows
};

// Number of levels of a categorical covariate: declared levels, or 1 + the largest index seen.
inline std::size_t level_count(const CombinedSample& sample, std::size_t j) {
  const auto& spec = sample.schema().covariates[j];
  if (!spec.levels.empty()) return spec.levels.size();
  double top = 0.0;
  for (const Unit& u : sample.units()) top = std::max(top, u.covariates[j]);
  return static_cast<std::size_t>(top) + 1;
}

// Covariate columns: continuous as-is, categorical as dummies for every level but the first.
inline std::vector<std::string> covariate_column_names(const CombinedSample& sample) {
  std::vector<std::string> names;
  const auto& covs = sample.schema().covariates;
  for (std::size_t j = 0; j < covs.size(); ++j) {
    if (covs[j].type == CovariateType::Continuous) {
      names.push_back(covs[j].name);
      continue;
    }
    const std::size_t levels = level_count(sample, j);
    for (std::size_t l = 1; l < levels; ++l)
      names.push_back(covs[j].name + "=" + (l < covs[j].levels.size() ? covs[j].levels[l] : std::to_string(l)));
  }
  return names;
}

inline std::vector<std::size_t> level_counts(const CombinedSample& sample) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < sample.schema().covariates.size(); ++j)
    out.push_back(sample.schema().covariates[j].type == CovariateType::Categorical ? level_count(sample, j) : 0);
  return out;
}

inline void fill_covariate_row(const Schema& schema, const std::vector<std::size_t>& levels, const Unit& u,
                               Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> row) {
  Eigen::Index c = 0;
  for (std::size_t j = 0; j < schema.covariates.size(); ++j) {
    if (schema.covariates[j].type == CovariateType::Continuous) {
      row[c++] = u.covariates[j];
      continue;
    }
    for (std::size_t l = 1; l < levels[j]; ++l) row[c++] = static_cast<std::size_t>(u.covariates[j]) == l ? 1.0 : 0.0;
  }
}

inline Design build_design(const CombinedSample& sample, std::span<const std::size_t> rows, const DesignSpec& spec) {
  Design d;
  if (spec.intercept) d.names.emplace_back("(intercept)");
  if (spec.treatment) d.names.emplace_back("treatment");
  if (spec.group_indicator) d.names.emplace_back("group_O");
  if (spec.treatment_by_group) d.names.emplace_back("treatment:group_O");
  std::vector<std::string> cov_names;
  if (spec.covariates) cov_names = covariate_column_names(sample);
  d.names.insert(d.names.end(), cov_names.begin(), cov_names.end());
  for (const auto& [name, values] : spec.extra) {
    if (values.size() != rows.size()) throw std::invalid_argument("extra column " + name + " is misaligned");
    d.names.push_back(name);
  }

  const auto n = static_cast<Eigen::Index>(rows.size());
  d.x.resize(n, static_cast<Eigen::Index>(d.names.size()));
  const auto ncov = static_cast<Eigen::Index>(cov_names.size());
  const auto levels = ncov > 0 ? level_counts(sample) : std::vector<std::size_t>{};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Unit& u = sample[rows[static_cast<std::size_t>(i)]];
    const double g = u.group == Group::Observational ? 1.0 : 0.0;
    Eigen::Index c = 0;
    if (spec.intercept) d.x(i, c++) = 1.0;
    if (spec.treatment) d.x(i, c++) = u.treatment;
    if (spec.group_indicator) d.x(i, c++) = g;
    if (spec.treatment_by_group) d.x(i, c++) = u.treatment * g;
    if (ncov > 0) {
      fill_covariate_row(sample.schema(), levels, u, d.x.row(i).segment(c, ncov));
      c += ncov;
    }
    for (const auto& [name, values] : spec.extra) d.x(i, c++) = values[static_cast<std::size_t>(i)];
  }
  return d;
}

inline Eigen::VectorXd gather_secondary(const CombinedSample& sample, std::span<const std::size_t> rows) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = sample[rows[i]].secondary;
  return y;
}

inline Eigen::VectorXd gather_primary(const CombinedSample& sample, std::span<const std::size_t> rows) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) y[static_cast<Eigen::Index>(i)] = sample[rows[i]].primary.value();
  return y;
}

} // namespace ltfuse
