#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <compare>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "ltfuse/core.hpp"

namespace ltfuse {

enum class CovariateType : std::uint8_t { Continuous, Categorical };

struct CovariateSpec {
  std::string name;
  CovariateType type = CovariateType::Continuous;
  // Categorical only: level labels; a unit stores the index into this list.
  std::vector<std::string> levels;

  friend bool operator==(const CovariateSpec&, const CovariateSpec&) = default;
};

// Column roles for a combined sample. Covariate types are declared, never inferred.
struct Schema {
  std::string group_column = "group";
  std::string treatment_column = "treatment";
  std::string secondary_column = "secondary";
  std::string primary_column = "primary";
  bool discrete_secondary = false;
  std::vector<CovariateSpec> covariates;

  bool all_categorical() const {
    return std::all_of(covariates.begin(), covariates.end(),
                       [](const CovariateSpec& c) { return c.type == CovariateType::Categorical; });
  }
  bool has_continuous() const { return !all_categorical(); }

  friend bool operator==(const Schema&, const Schema&) = default;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

// Shortest representation that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

// One CSV record. Double quotes delimit fields that contain commas; "" escapes a quote.
inline std::vector<std::string> parse_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field.push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(field));
      field.clear();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  fields.push_back(trim(field));
  return fields;
}

inline std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

} // namespace detail

// Parses the schema config: one `column = role` line per column, `#` starts a comment.
// Roles: group, treatment, secondary, secondary:discrete, primary, continuous,
// categorical, categorical:<level>|<level>|...
inline Schema parse_schema(std::istream& in) {
  Schema schema;
  bool seen_group = false, seen_treatment = false, seen_secondary = false, seen_primary = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string text = detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos)
      throw ValidationError("schema line " + std::to_string(line_no) + ": expected `column = role`");
    const std::string column = detail::trim(std::string_view(text).substr(0, eq));
    const std::string role = detail::trim(std::string_view(text).substr(eq + 1));
    if (column.empty()) throw ValidationError("schema line " + std::to_string(line_no) + ": empty column name");
    if (role == "group") {
      schema.group_column = column;
      seen_group = true;
    } else if (role == "treatment") {
      schema.treatment_column = column;
      seen_treatment = true;
    } else if (role == "secondary" || role == "secondary:discrete") {
      schema.secondary_column = column;
      schema.discrete_secondary = role == "secondary:discrete";
      seen_secondary = true;
    } else if (role == "primary") {
      schema.primary_column = column;
      seen_primary = true;
    } else if (role == "continuous") {
      schema.covariates.push_back({column, CovariateType::Continuous, {}});
    } else if (role == "categorical" || role.starts_with("categorical:")) {
      CovariateSpec spec{column, CovariateType::Categorical, {}};
      if (role.size() > 12) {
        for (auto& level : detail::split(std::string_view(role).substr(12), '|')) {
          spec.levels.push_back(detail::trim(level));
        }
      }
      schema.covariates.push_back(std::move(spec));
    } else {
      throw ValidationError("schema line " + std::to_string(line_no) + ": unknown role \"" + role + "\"");
    }
  }
  if (!seen_group || !seen_treatment || !seen_secondary || !seen_primary)
    throw ValidationError("schema must assign the group, treatment, secondary and primary roles");
  return schema;
}

inline void write_schema(std::ostream& out, const Schema& schema) {
  out << schema.group_column << " = group\n";
  out << schema.treatment_column << " = treatment\n";
  out << schema.secondary_column << " = " << (schema.discrete_secondary ? "secondary:discrete" : "secondary") << "\n";
  out << schema.primary_column << " = primary\n";
  for (const auto& c : schema.covariates) {
    out << c.name << " = ";
    if (c.type == CovariateType::Continuous) {
      out << "continuous\n";
      continue;
    }
    out << "categorical";
    for (std::size_t i = 0; i < c.levels.size(); ++i) out << (i == 0 ? ":" : "|") << c.levels[i];
    out << "\n";
  }
}

struct Unit {
  Group group = Group::Experimental;
  int treatment = 0;
  // Continuous values as-is; categorical values as level indices.
  std::vector<double> covariates;
  double secondary = 0.0;
  // Present exactly for observational units.
  std::optional<double> primary;

  friend bool operator==(const Unit&, const Unit&) = default;
};

// Validated, immutable collection of units from both groups.
class CombinedSample {
public:
  static CombinedSample create(Schema schema, std::vector<Unit> units, Warnings warnings = {}) {
    const std::size_t p = schema.covariates.size();
    for (std::size_t i = 0; i < units.size(); ++i) {
      const Unit& u = units[i];
      const std::string where = " (unit " + std::to_string(i) + ")";
      if (u.treatment != 0 && u.treatment != 1) throw ValidationError("non-binary treatment" + where);
      if (u.covariates.size() != p)
        throw ValidationError("covariate vector length " + std::to_string(u.covariates.size()) +
                              " does not match schema length " + std::to_string(p) + where);
      if (!std::isfinite(u.secondary)) throw ValidationError("non-finite secondary outcome" + where);
      if (u.group == Group::Observational && !u.primary)
        throw ValidationError("primary missing in observational unit" + where);
      if (u.group == Group::Experimental && u.primary)
        throw ValidationError("primary present in experimental unit" + where);
      if (u.primary && !std::isfinite(*u.primary)) throw ValidationError("non-finite primary outcome" + where);
      for (std::size_t j = 0; j < p; ++j) {
        const double x = u.covariates[j];
        if (!std::isfinite(x)) throw ValidationError("non-finite covariate " + schema.covariates[j].name + where);
        const auto& spec = schema.covariates[j];
        if (spec.type == CovariateType::Categorical &&
            (x != std::floor(x) || x < 0 || (!spec.levels.empty() && x >= static_cast<double>(spec.levels.size()))))
          throw ValidationError("invalid level index for categorical covariate " + spec.name + where);
      }
    }
    CombinedSample s;
    s.schema_ = std::move(schema);
    s.units_ = std::move(units);
    s.warnings_ = std::move(warnings);
    for (const Unit& u : s.units_) ++s.counts_[slot(u.group, u.treatment)];
    return s;
  }

  const Schema& schema() const { return schema_; }
  const std::vector<Unit>& units() const { return units_; }
  const Unit& operator[](std::size_t i) const { return units_[i]; }
  std::size_t size() const { return units_.size(); }
  const Warnings& warnings() const { return warnings_; }

  // N^g_w
  std::size_t count(Group g, int w) const { return counts_[slot(g, w)]; }
  std::size_t count(Group g) const { return count(g, 0) + count(g, 1); }

  std::vector<std::size_t> indices(Group g) const {
    std::vector<std::size_t> out;
    out.reserve(count(g));
    for (std::size_t i = 0; i < units_.size(); ++i)
      if (units_[i].group == g) out.push_back(i);
    return out;
  }

  // Positivity of all four (g,w) cells; every estimator calls this first.
  void require_all_cells() const {
    for (Group g : {Group::Experimental, Group::Observational})
      for (int w : {0, 1})
        if (count(g, w) == 0) throw ValidationError("empty cell " + cell_label(g, w) + ": no units with group=" +
                                                    group_code(g) + " and treatment=" + std::to_string(w));
  }

private:
  static std::size_t slot(Group g, int w) {
    return (g == Group::Observational ? 2u : 0u) + static_cast<std::size_t>(w);
  }

  Schema schema_;
  std::vector<Unit> units_;
  Warnings warnings_;
  std::array<std::size_t, 4> counts_{};
};

// ---------------------------------------------------------------------------
// CSV ingestion

inline CombinedSample load_sample(std::istream& in, Schema schema) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("input is empty: missing header row");
  const auto header = detail::parse_csv_line(line);
  auto column_of = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ValidationError("missing required column \"" + name + "\"");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t group_col = column_of(schema.group_column);
  const std::size_t treat_col = column_of(schema.treatment_column);
  const std::size_t sec_col = column_of(schema.secondary_column);
  const std::size_t prim_col = column_of(schema.primary_column);
  std::vector<std::size_t> cov_cols;
  for (const auto& c : schema.covariates) cov_cols.push_back(column_of(c.name));

  struct Row {
    std::vector<std::string> fields;
    int line_no;
  };
  std::vector<Row> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::parse_csv_line(line);
    if (fields.size() != header.size())
      throw ValidationError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                            " fields, found " + std::to_string(fields.size()));
    rows.push_back({std::move(fields), line_no});
  }

  // Undeclared categorical levels are interned in sorted order, so ids do not depend on row order.
  std::vector<std::unordered_map<std::string, std::size_t>> level_ids(schema.covariates.size());
  for (std::size_t j = 0; j < schema.covariates.size(); ++j) {
    auto& spec = schema.covariates[j];
    if (spec.type != CovariateType::Categorical) continue;
    if (spec.levels.empty()) {
      std::vector<std::string> seen;
      for (const auto& r : rows) seen.push_back(r.fields[cov_cols[j]]);
      std::sort(seen.begin(), seen.end());
      seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
      spec.levels = seen;
    }
    for (std::size_t k = 0; k < spec.levels.size(); ++k) level_ids[j][spec.levels[k]] = k;
  }

  auto numeric = [&](const std::string& text, const std::string& column, int ln) {
    if (text.empty()) throw ValidationError("line " + std::to_string(ln) + ": missing value in column \"" + column + "\"");
    const auto v = detail::parse_double(text);
    if (!v) throw ValidationError("line " + std::to_string(ln) + ": unparseable numeric value \"" + text +
                                  "\" in column \"" + column + "\"");
    return *v;
  };

  Warnings warnings;
  std::size_t discarded = 0;
  std::vector<Unit> units;
  units.reserve(rows.size());
  for (const auto& [f, ln] : rows) {
    Unit u;
    u.group = [&] {
      try {
        return parse_group(f[group_col]);
      } catch (const ValidationError& e) {
        throw ValidationError("line " + std::to_string(ln) + ": " + e.what());
      }
    }();
    const std::string& t = f[treat_col];
    if (t == "0")
      u.treatment = 0;
    else if (t == "1")
      u.treatment = 1;
    else
      throw ValidationError("line " + std::to_string(ln) + ": non-binary treatment value \"" + t + "\"");
    u.secondary = numeric(f[sec_col], schema.secondary_column, ln);
    const std::string& prim = f[prim_col];
    if (u.group == Group::Observational) {
      if (prim.empty()) throw ValidationError("line " + std::to_string(ln) + ": primary missing in observational unit");
      u.primary = numeric(prim, schema.primary_column, ln);
    } else if (!prim.empty()) {
      ++discarded;
    }
    for (std::size_t j = 0; j < schema.covariates.size(); ++j) {
      const auto& spec = schema.covariates[j];
      const std::string& text = f[cov_cols[j]];
      if (spec.type == CovariateType::Continuous) {
        u.covariates.push_back(numeric(text, spec.name, ln));
      } else {
        if (text.empty())
          throw ValidationError("line " + std::to_string(ln) + ": missing value in column \"" + spec.name + "\"");
        const auto it = level_ids[j].find(text);
        if (it == level_ids[j].end())
          throw ValidationError("line " + std::to_string(ln) + ": undeclared level \"" + text + "\" for \"" +
                                spec.name + "\"");
        u.covariates.push_back(static_cast<double>(it->second));
      }
    }
    units.push_back(std::move(u));
  }
  if (discarded > 0)
    warnings.push_back({"primary_discarded", std::to_string(discarded) +
                                                 " experimental row(s) carried a primary outcome; values discarded"});
  return CombinedSample::create(std::move(schema), std::move(units), std::move(warnings));
}

inline void write_sample(std::ostream& out, const CombinedSample& sample) {
  const Schema& s = sample.schema();
  out << detail::csv_escape(s.group_column) << ',' << detail::csv_escape(s.treatment_column);
  for (const auto& c : s.covariates) out << ',' << detail::csv_escape(c.name);
  out << ',' << detail::csv_escape(s.secondary_column) << ',' << detail::csv_escape(s.primary_column) << '\n';
  for (const Unit& u : sample.units()) {
    out << group_code(u.group) << ',' << u.treatment;
    for (std::size_t j = 0; j < s.covariates.size(); ++j) {
      const auto& spec = s.covariates[j];
      out << ',';
      if (spec.type == CovariateType::Continuous) {
        out << detail::format_double(u.covariates[j]);
      } else {
        const auto level = static_cast<std::size_t>(u.covariates[j]);
        out << detail::csv_escape(level < spec.levels.size() ? spec.levels[level] : std::to_string(level));
      }
    }
    out << ',' << detail::format_double(u.secondary) << ',';
    if (u.primary) out << detail::format_double(*u.primary);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Cells

// Maps categorical covariate tuples to dense ids ordered by tuple value.
class CovariateCells {
public:
  explicit CovariateCells(const CombinedSample& sample) {
    if (!sample.schema().all_categorical())
      throw ValidationError("covariate cells require every covariate to be categorical");
    for (const Unit& u : sample.units()) ids_.emplace(u.covariates, 0);
    int next = 0;
    for (auto& [key, id] : ids_) id = next++;
  }

  std::size_t size() const { return ids_.size(); }

  std::optional<int> find(const std::vector<double>& covariates) const {
    const auto it = ids_.find(covariates);
    if (it == ids_.end()) return std::nullopt;
    return it->second;
  }

  int at(const std::vector<double>& covariates) const {
    const auto id = find(covariates);
    if (!id) throw EstimationError("covariate cell not present in the sample");
    return *id;
  }

private:
  std::map<std::vector<double>, int> ids_;
};

inline std::string describe_covariates(const Schema& schema, const std::vector<double>& x) {
  std::string out;
  for (std::size_t j = 0; j < x.size() && j < schema.covariates.size(); ++j) {
    const auto& spec = schema.covariates[j];
    if (!out.empty()) out += ", ";
    out += spec.name + "=";
    if (spec.type == CovariateType::Categorical && static_cast<std::size_t>(x[j]) < spec.levels.size())
      out += spec.levels[static_cast<std::size_t>(x[j])];
    else
      out += detail::format_double(x[j]);
  }
  return out.empty() ? "(no covariates)" : out;
}

struct CellKey {
  std::optional<Group> group;
  std::optional<int> treatment;
  std::optional<int> covariate_cell;
  // Secondary value, or bin index when the secondary outcome is discretized.
  std::optional<double> secondary;

  friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct CellSpec {
  bool group = false;
  bool treatment = false;
  bool covariates = false;
  bool secondary = false;
  // Interior bin edges for a continuous secondary outcome; bin = number of edges <= value.
  std::optional<std::vector<double>> secondary_edges;
};

inline std::size_t bin_index(const std::vector<double>& edges, double v) {
  return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) - edges.begin());
}

inline std::map<CellKey, std::vector<std::size_t>> cell_partition(const CombinedSample& sample, const CellSpec& spec) {
  if (spec.secondary && !spec.secondary_edges && !sample.schema().discrete_secondary)
    throw ValidationError("cell specification uses a continuous secondary outcome without a discretization");
  std::optional<CovariateCells> cells;
  if (spec.covariates) cells.emplace(sample);
  std::map<CellKey, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const Unit& u = sample[i];
    CellKey key;
    if (spec.group) key.group = u.group;
    if (spec.treatment) key.treatment = u.treatment;
    if (cells) key.covariate_cell = cells->at(u.covariates);
    if (spec.secondary)
      key.secondary = spec.secondary_edges ? static_cast<double>(bin_index(*spec.secondary_edges, u.secondary))
                                           : u.secondary;
    out[key].push_back(i);
  }
  return out;
}

// Resamples with replacement within each (g,w) stratum; stratum sizes are preserved.
inline CombinedSample bootstrap_resample(const CombinedSample& sample, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Unit> units;
  units.reserve(sample.size());
  for (Group g : {Group::Experimental, Group::Observational}) {
    for (int w : {0, 1}) {
      std::vector<std::size_t> stratum;
      for (std::size_t i = 0; i < sample.size(); ++i)
        if (sample[i].group == g && sample[i].treatment == w) stratum.push_back(i);
      if (stratum.empty()) continue;
      std::uniform_int_distribution<std::size_t> pick(0, stratum.size() - 1);
      for (std::size_t k = 0; k < stratum.size(); ++k) units.push_back(sample[stratum[pick(rng)]]);
    }
  }
  return CombinedSample::create(sample.schema(), std::move(units));
}

// ---------------------------------------------------------------------------

struct EstimateReport {
  std::string estimator;
  double tau_hat = 0.0;
  std::optional<double> bootstrap_se; // present iff n_bootstrap > 0
  int n_bootstrap = 0;
  std::string config_fingerprint;
  Warnings warnings;
};

} // namespace ltfuse
