#pragma once

#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ltfuse/binary_exact.hpp"
#include "ltfuse/bootstrap.hpp"
#include "ltfuse/diagnostics.hpp"
#include "ltfuse/general.hpp"
#include "ltfuse/json_io.hpp"
#include "ltfuse/linear_cf.hpp"
#include "ltfuse/simulation.hpp"

namespace ltfuse::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_internal = 1;
inline constexpr int exit_validation = 2;
inline constexpr int exit_estimation = 3;

inline constexpr int schema_version = 1;

enum class Method : std::uint8_t {
  BinaryImputation,
  BinaryWeighting,
  LinearControlFunction,
  LinearImputation,
  Imputation,
  Weighting,
  ControlFunction,
};

inline const std::vector<std::pair<std::string, Method>>& method_names() {
  static const std::vector<std::pair<std::string, Method>> names{
      {"binary-imputation", Method::BinaryImputation}, {"binary-weighting", Method::BinaryWeighting},
      {"linear-cf", Method::LinearControlFunction},    {"linear-imputation", Method::LinearImputation},
      {"imputation", Method::Imputation},              {"weighting", Method::Weighting},
      {"control-function", Method::ControlFunction}};
  return names;
}

inline std::string to_string(Method m) {
  for (const auto& [name, method] : method_names())
    if (method == m) return name;
  return "?";
}

inline Method parse_method(const std::string& name) {
  for (const auto& [n, method] : method_names())
    if (n == name) return method;
  std::string known;
  for (const auto& [n, method] : method_names()) known += (known.empty() ? "" : ", ") + n;
  throw ValidationError("unknown method \"" + name + "\" (expected one of: " + known + ")");
}

inline bool uses_nuisance(Method m) {
  return m == Method::Imputation || m == Method::Weighting || m == Method::ControlFunction;
}

namespace detail {

inline std::vector<std::string> split_list(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  for (const auto& item : raw)
    for (auto& part : ltfuse::detail::split(item, ','))
      if (auto t = ltfuse::detail::trim(part); !t.empty()) out.push_back(t);
  return out;
}

inline std::ifstream open_input(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ValidationError(what + " file not found or unreadable: " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path, const std::string& what) {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot open " + what + " for writing: " + path);
  return out;
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Header common to every report; the fingerprint hashes the resolved configuration.
inline Json report_header(const std::string& command, const Json& config, bool timestamp) {
  Json j;
  j["schema_version"] = schema_version;
  j["command"] = command;
  if (timestamp) j["generated_at"] = utc_timestamp();
  j["config"] = config;
  j["config_fingerprint"] = fnv1a_hex(config.dump());
  return j;
}

inline void emit(const Json& report, const std::string& out_path, std::ostream& out) {
  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) {
    out << text;
  } else {
    auto f = open_output(out_path, "report");
    f << text;
  }
}

inline CombinedSample load(const std::string& data_path, const std::string& schema_path) {
  auto schema_in = open_input(schema_path, "schema");
  Schema schema = parse_schema(schema_in);
  auto data_in = open_input(data_path, "data");
  return load_sample(data_in, std::move(schema));
}

struct NuisanceArgs {
  std::string method = "auto";
  std::optional<std::size_t> k;
  std::size_t bins = 20;
  double trim = 0.01;
};

// auto: frequency tables for categorical X with a discrete secondary outcome, binning for
// categorical X with a continuous one, nearest neighbours otherwise.
inline NuisanceMethod resolve_nuisance(const Schema& schema, const std::string& name) {
  if (name == "frequency") return NuisanceMethod::FrequencyTable;
  if (name == "knn") return NuisanceMethod::KNearestNeighbor;
  if (name == "binning") return NuisanceMethod::Binning;
  if (name != "auto") throw ValidationError("unknown nuisance method \"" + name + "\"");
  if (!schema.all_categorical()) return NuisanceMethod::KNearestNeighbor;
  return schema.discrete_secondary ? NuisanceMethod::FrequencyTable : NuisanceMethod::Binning;
}

inline GeneralConfig general_config(const Schema& schema, const NuisanceArgs& args, ExperimentalDesign design) {
  GeneralConfig cfg;
  cfg.nuisance.method = resolve_nuisance(schema, args.method);
  cfg.nuisance.k = args.k;
  cfg.nuisance.bins = args.bins;
  cfg.nuisance.trim = args.trim;
  cfg.design = design;
  return cfg;
}

inline Json nuisance_json(const GeneralConfig& cfg) {
  Json j = {{"method", ltfuse::to_string(cfg.nuisance.method)}};
  j["k"] = cfg.nuisance.k ? Json(*cfg.nuisance.k) : Json(nullptr);
  j["bins"] = cfg.nuisance.bins;
  j["trim"] = cfg.nuisance.trim;
  return j;
}

struct MethodResult {
  double tau_hat = 0.0;
  Json details = Json::object();
  Warnings warnings;
};

inline Json weights_json(const WeightSummary& w) {
  return {{"count", w.count}, {"min", w.min}, {"max", w.max}, {"trimmed", w.trimmed}, {"zero", w.zero}};
}

inline MethodResult run_method(const CombinedSample& sample, Method m, const GeneralConfig& cfg, bool with_details) {
  MethodResult r;
  switch (m) {
  case Method::BinaryImputation: {
    auto e = estimate_binary_imputation(sample);
    r.tau_hat = e.tau_hat;
    r.warnings = std::move(e.warnings);
    break;
  }
  case Method::BinaryWeighting: {
    auto e = estimate_binary_weighting(sample);
    r.tau_hat = e.tau_hat;
    r.warnings = std::move(e.warnings);
    break;
  }
  case Method::LinearControlFunction: {
    const auto f = estimate_linear_control_function(sample);
    r.tau_hat = f.tau_p_hat;
    if (with_details) {
      std::vector<int> treatments;
      for (auto i : sample.indices(Group::Observational)) treatments.push_back(sample[i].treatment);
      const auto balance = residual_balance_diagnostic(f.residuals, treatments);
      r.details = {{"robust_se", f.fit.se("treatment")},
                   {"delta_hat", f.delta_hat},
                   {"delta_robust_se", f.fit.se("alpha_s")},
                   {"tau_s_experimental", f.secondary.tau_s_hat},
                   {"residual_balance",
                    {{"mean_treated", balance.mean_treated},
                     {"mean_control", balance.mean_control},
                     {"difference", balance.difference},
                     {"robust_se", balance.robust_se}}}};
    }
    break;
  }
  case Method::LinearImputation: {
    const auto f = estimate_linear_imputation(sample);
    r.tau_hat = f.tau_hat;
    if (with_details) r.details = {{"beta_hat", f.beta_hat}, {"delta_hat", f.delta_hat}};
    break;
  }
  case Method::Imputation:
  case Method::Weighting:
  case Method::ControlFunction: {
    auto e = m == Method::Imputation ? run_general_imputation(sample, cfg)
             : m == Method::Weighting ? run_general_weighting(sample, cfg)
                                      : run_control_function(sample, cfg);
    r.tau_hat = e.tau_hat;
    r.warnings = std::move(e.warnings);
    if (with_details) r.details = {{"weights", weights_json(e.weights)}};
    break;
  }
  }
  return r;
}

inline Json estimate_entry(const std::string& name, double tau, const BootstrapResult* boot, Json details,
                           const Warnings& warnings) {
  Json j = {{"estimator", name}, {"tau_hat", tau}};
  if (boot) {
    j["bootstrap_se"] = boot->se ? Json(*boot->se) : Json(nullptr);
    j["n_bootstrap"] = boot->replicates;
    j["bootstrap_failures"] = boot->failed;
  } else {
    j["bootstrap_se"] = nullptr;
    j["n_bootstrap"] = 0;
  }
  if (!details.empty()) j["details"] = std::move(details);
  Warnings all = warnings;
  if (boot) append(all, boot->warnings);
  j["warnings"] = to_json(all);
  return j;
}

inline Json regression_entry(const std::string& name, const std::string& outcome, char group, const OlsFit& fit) {
  return {{"name", name},
          {"outcome", outcome},
          {"group", std::string(1, group)},
          {"coefficient", fit.coef("treatment")},
          {"robust_se", fit.se("treatment")},
          {"n", fit.n}};
}

inline Json sample_json(const CombinedSample& s) {
  Json counts;
  for (Group g : {Group::Experimental, Group::Observational})
    for (int w : {0, 1}) counts[cell_label(g, w)] = s.count(g, w);
  Json covs = Json::array();
  for (const auto& c : s.schema().covariates)
    covs.push_back({{"name", c.name}, {"type", c.type == CovariateType::Continuous ? "continuous" : "categorical"}});
  return {{"n", s.size()}, {"cells", counts}, {"covariates", covs},
          {"secondary", s.schema().discrete_secondary ? "discrete" : "continuous"}};
}

// ---------------------------------------------------------------------------

struct EstimateArgs {
  std::string data, schema, out;
  std::vector<std::string> methods{"linear-cf"};
  NuisanceArgs nuisance;
  std::string design = "randomized";
  std::size_t bootstrap = 200;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool no_timestamp = false;
};

inline ExperimentalDesign parse_design(const std::string& s) {
  if (s == "randomized") return ExperimentalDesign::Randomized;
  if (s == "unconfounded") return ExperimentalDesign::Unconfounded;
  throw ValidationError("unknown experimental design \"" + s + "\" (expected randomized or unconfounded)");
}

inline int run_estimate(const EstimateArgs& a, std::ostream& out) {
  const auto names = split_list(a.methods);
  if (names.empty()) throw ValidationError("no estimation method given");
  std::vector<Method> methods;
  for (const auto& n : names) methods.push_back(parse_method(n));
  const ExperimentalDesign design = parse_design(a.design);
  if (a.bootstrap > 0 && !a.seed) throw ValidationError("--seed is required when --bootstrap is positive");

  const CombinedSample sample = load(a.data, a.schema);
  const GeneralConfig cfg = general_config(sample.schema(), a.nuisance, design);

  Json config = {{"data", a.data}, {"schema", a.schema}, {"methods", names}};
  config["nuisance"] = nuisance_json(cfg);
  config["experimental_design"] = a.design;
  config["bootstrap"] = a.bootstrap;
  config["seed"] = a.seed ? Json(*a.seed) : Json(nullptr);
  Json report = report_header("estimate", config, !a.no_timestamp);
  report["sample"] = sample_json(sample);
  sample.require_all_cells();

  // Each estimator gets its own bootstrap stream so adding a method does not change the others.
  auto boot = [&](std::uint64_t stream, const std::function<double(const CombinedSample&)>& fn) {
    return bootstrap_se(sample, a.bootstrap, derive_seed(a.seed.value_or(0), stream), a.threads, fn);
  };

  Json estimates = Json::array();
  for (std::size_t i = 0; i < methods.size(); ++i) {
    const Method m = methods[i];
    MethodResult r = run_method(sample, m, cfg, true);
    if (uses_nuisance(m)) r.details["nuisance"] = ltfuse::to_string(cfg.nuisance.method);
    std::optional<BootstrapResult> b;
    if (a.bootstrap > 0)
      b = boot(static_cast<std::uint64_t>(m) + 1,
               [&](const CombinedSample& s) { return run_method(s, m, cfg, false).tau_hat; });
    estimates.push_back(estimate_entry(to_string(m), r.tau_hat, b ? &*b : nullptr, std::move(r.details), r.warnings));
  }
  report["estimates"] = std::move(estimates);

  const double naive = tau_naive_observational(sample, Outcome::Primary);
  std::optional<BootstrapResult> nb;
  if (a.bootstrap > 0)
    nb = boot(0, [](const CombinedSample& s) { return tau_naive_observational(s, Outcome::Primary); });
  report["naive_observational"] = estimate_entry("naive-observational", naive, nb ? &*nb : nullptr, {}, {});

  Json comparisons = Json::array();
  comparisons.push_back(regression_entry("secondary_experimental", "secondary", 'E',
                                         regress_within_group(sample, Group::Experimental, Outcome::Secondary)));
  comparisons.push_back(regression_entry("secondary_observational", "secondary", 'O',
                                         regress_within_group(sample, Group::Observational, Outcome::Secondary)));
  comparisons.push_back(regression_entry("primary_observational", "primary", 'O',
                                         regress_within_group(sample, Group::Observational, Outcome::Primary)));
  report["comparisons"] = std::move(comparisons);
  report["warnings"] = to_json(sample.warnings());
  emit(report, a.out, out);
  return exit_ok;
}

// ---------------------------------------------------------------------------

struct DiagnoseArgs {
  std::string data, schema, out;
  std::vector<std::string> tests{"lemma2,secondary-gap,surrogacy"};
  std::string lemma2_method = "regression";
  std::size_t permutations = 999;
  std::size_t max_cells = 50;
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool no_timestamp = false;
};

inline int run_diagnose(const DiagnoseArgs& a, std::ostream& out) {
  const auto tests = split_list(a.tests);
  for (const auto& t : tests)
    if (t != "lemma2" && t != "secondary-gap" && t != "surrogacy")
      throw ValidationError("unknown diagnostic \"" + t + "\" (expected lemma2, secondary-gap, surrogacy)");
  Lemma2Options lo;
  if (a.lemma2_method == "permutation")
    lo.method = DiagnosticMethod::Permutation;
  else if (a.lemma2_method != "regression")
    throw ValidationError("unknown lemma2 method \"" + a.lemma2_method + "\" (expected regression or permutation)");
  const bool stochastic =
      lo.method == DiagnosticMethod::Permutation && std::find(tests.begin(), tests.end(), "lemma2") != tests.end();
  if (stochastic && !a.seed) throw ValidationError("--seed is required for the permutation test");
  lo.n_permutations = a.permutations;
  lo.max_cells = a.max_cells;
  lo.seed = a.seed.value_or(0);
  lo.threads = a.threads;

  const CombinedSample sample = load(a.data, a.schema);
  Json config = {{"data", a.data}, {"schema", a.schema}, {"tests", tests}, {"lemma2_method", a.lemma2_method}};
  config["permutations"] = a.permutations;
  config["max_cells"] = a.max_cells;
  config["seed"] = a.seed ? Json(*a.seed) : Json(nullptr);
  Json report = report_header("diagnose", config, !a.no_timestamp);
  report["sample"] = sample_json(sample);
  sample.require_all_cells();

  Json results = Json::array();
  for (const auto& t : tests) {
    if (t == "lemma2") results.push_back(to_json(test_lemma2(sample, lo)));
    if (t == "secondary-gap") results.push_back(to_json(compare_secondary_effects(sample)));
    if (t == "surrogacy") results.push_back(to_json(surrogacy_check(sample)));
  }
  report["diagnostics"] = std::move(results);
  report["warnings"] = to_json(sample.warnings());
  emit(report, a.out, out);
  return exit_ok;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config, out, truth, schema_out;
  bool discrete = false;
  bool unconfounded_experiment = false;
  std::optional<std::uint64_t> seed;
  std::size_t x_support = 2, latent_support = 2, noise_support = 2;
  bool no_timestamp = false;
};

inline SimConfig read_sim_config(const std::string& path) {
  auto in = open_input(path, "simulation config");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("simulation config is not valid JSON: " + std::string(e.what()));
  }
  return sim_config_from_json(j);
}

inline int run_simulate(const SimulateArgs& a, std::ostream& out) {
  Json config, truth;
  std::optional<CombinedSample> sample;
  if (a.discrete) {
    if (!a.config.empty()) throw ValidationError("--config and --discrete are mutually exclusive");
    if (!a.seed) throw ValidationError("--seed is required for --discrete");
    const auto table = simulate_discrete(*a.seed, {a.x_support, a.latent_support, a.noise_support},
                                         !a.unconfounded_experiment);
    config = {{"discrete", true},
              {"seed", *a.seed},
              {"x_support", a.x_support},
              {"latent_support", a.latent_support},
              {"noise_support", a.noise_support},
              {"randomized_experiment", !a.unconfounded_experiment}};
    const auto oracle = identification_oracle(table);
    truth = {{"tau_P", oracle.truth}, {"identified_tau_P", oracle.identified}, {"table", to_json(table)}};
    sample = population_sample(table);
  } else {
    if (a.config.empty()) throw ValidationError("simulate needs --config or --discrete");
    SimConfig c = read_sim_config(a.config);
    if (a.seed) c.seed = *a.seed;
    config = to_json(c);
    auto sim = simulate_linear(c);
    truth = to_json(sim.truth);
    sample = std::move(sim.sample);
  }
  {
    auto f = open_output(a.out, "sample");
    write_sample(f, *sample);
  }
  if (!a.truth.empty()) {
    auto f = open_output(a.truth, "truth");
    f << truth.dump(2) << "\n";
  }
  if (!a.schema_out.empty()) {
    auto f = open_output(a.schema_out, "schema");
    write_schema(f, sample->schema());
  }
  Json report = report_header("simulate", config, !a.no_timestamp);
  report["sample"] = sample_json(*sample);
  report["truth"] = truth;
  Json outputs = {{"sample", a.out}};
  outputs["truth"] = a.truth.empty() ? Json(nullptr) : Json(a.truth);
  outputs["schema"] = a.schema_out.empty() ? Json(nullptr) : Json(a.schema_out);
  report["outputs"] = outputs;
  emit(report, "", out);
  return exit_ok;
}

// ---------------------------------------------------------------------------

struct BenchArgs {
  std::string config, out, format = "json";
  std::size_t replicates = 100;
  std::vector<std::string> methods{"linear-cf,linear-imputation,weighting"};
  NuisanceArgs nuisance;
  std::string design = "randomized";
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
  bool no_timestamp = false;
};

struct BenchSummary {
  std::string method;
  std::size_t ok = 0, failed = 0;
  double mean = 0.0, bias = 0.0, sd = 0.0, rmse = 0.0, mc_se = 0.0;
};

inline BenchSummary summarize(const std::string& method, const std::vector<std::optional<double>>& values, double truth) {
  BenchSummary s;
  s.method = method;
  std::vector<double> ok, sq_err;
  for (const auto& v : values) {
    if (!v) continue;
    ok.push_back(*v);
    sq_err.push_back((*v - truth) * (*v - truth));
  }
  s.ok = ok.size();
  s.failed = values.size() - ok.size();
  if (ok.empty()) return s;
  s.mean = pairwise_mean(ok);
  s.bias = s.mean - truth;
  s.rmse = std::sqrt(pairwise_mean(sq_err));
  if (ok.size() > 1) {
    std::vector<double> dev;
    for (double v : ok) dev.push_back((v - s.mean) * (v - s.mean));
    s.sd = std::sqrt(pairwise_sum(dev) / static_cast<double>(ok.size() - 1));
    s.mc_se = s.sd / std::sqrt(static_cast<double>(ok.size()));
  }
  return s;
}

inline int run_bench(const BenchArgs& a, std::ostream& out) {
  if (a.format != "json" && a.format != "csv") throw ValidationError("--format must be json or csv");
  if (!a.seed) throw ValidationError("--seed is required for bench");
  if (a.replicates == 0) throw ValidationError("--replicates must be positive");
  const auto names = split_list(a.methods);
  std::vector<Method> methods;
  for (const auto& n : names) methods.push_back(parse_method(n));
  const SimConfig base = read_sim_config(a.config);
  const ExperimentalDesign design = parse_design(a.design);
  const GeneralConfig cfg = general_config(simulation_schema(base), a.nuisance, design);
  const SimTruth truth = true_tau(base);

  // estimates[r][m]; the last column is the naive observational difference.
  const std::size_t cols = methods.size() + 1;
  std::vector<std::vector<std::optional<double>>> estimates(a.replicates, std::vector<std::optional<double>>(cols));
  std::vector<std::uint64_t> seeds(a.replicates);
  parallel_for(a.replicates, a.threads, [&](std::size_t r) {
    SimConfig c = base;
    c.seed = seeds[r] = derive_seed(*a.seed, r);
    const auto sim = simulate_linear(c);
    for (std::size_t m = 0; m < methods.size(); ++m) {
      try {
        estimates[r][m] = run_method(sim.sample, methods[m], cfg, false).tau_hat;
      } catch (const EstimationError&) {
      } catch (const ValidationError&) {
      }
    }
    estimates[r][methods.size()] = tau_naive_observational(sim.sample, Outcome::Primary);
  });

  std::vector<BenchSummary> table;
  for (std::size_t m = 0; m < cols; ++m) {
    std::vector<std::optional<double>> column;
    for (const auto& row : estimates) column.push_back(row[m]);
    table.push_back(summarize(m < methods.size() ? to_string(methods[m]) : "naive-observational", column, truth.tau_p));
  }

  if (a.format == "csv") {
    std::ostringstream csv;
    csv << "method,truth,n_ok,n_failed,mean,bias,sd,rmse,mc_se\n";
    for (const auto& s : table)
      csv << s.method << ',' << ltfuse::detail::format_double(truth.tau_p) << ',' << s.ok << ',' << s.failed << ','
          << ltfuse::detail::format_double(s.mean) << ',' << ltfuse::detail::format_double(s.bias) << ','
          << ltfuse::detail::format_double(s.sd) << ',' << ltfuse::detail::format_double(s.rmse) << ','
          << ltfuse::detail::format_double(s.mc_se) << '\n';
    if (a.out.empty()) {
      out << csv.str();
    } else {
      auto f = open_output(a.out, "bench table");
      f << csv.str();
    }
    return exit_ok;
  }

  Json config = {{"simulation", to_json(base)}, {"methods", names}};
  config["nuisance"] = nuisance_json(cfg);
  config["experimental_design"] = a.design;
  config["replicates"] = a.replicates;
  config["seed"] = *a.seed;
  Json report = report_header("bench", config, !a.no_timestamp);
  report["truth"] = to_json(truth);
  Json summary = Json::array();
  for (const auto& s : table)
    summary.push_back({{"method", s.method},
                       {"n_ok", s.ok},
                       {"n_failed", s.failed},
                       {"mean", s.mean},
                       {"bias", s.bias},
                       {"sd", s.sd},
                       {"rmse", s.rmse},
                       {"mc_se", s.mc_se}});
  report["summary"] = std::move(summary);
  Json reps = Json::array();
  for (std::size_t r = 0; r < a.replicates; ++r) {
    Json est = Json::object();
    for (std::size_t m = 0; m < cols; ++m)
      est[table[m].method] = estimates[r][m] ? Json(*estimates[r][m]) : Json(nullptr);
    reps.push_back({{"index", r}, {"seed", seeds[r]}, {"estimates", est}});
  }
  report["replicates"] = std::move(reps);
  emit(report, a.out, out);
  return exit_ok;
}

inline void add_nuisance_options(CLI::App* cmd, NuisanceArgs& n) {
  cmd->add_option("--nuisance", n.method, "Nuisance method: frequency, knn, binning or auto")->capture_default_str();
  cmd->add_option("--k", n.k, "Neighbours for knn (default ceil(n^0.8) within arm)");
  cmd->add_option("--bins", n.bins, "Bins for binning")->capture_default_str();
  cmd->add_option("--trim", n.trim, "Trimming bound for probabilities")->capture_default_str();
}

} // namespace detail

// Parses argv and runs one subcommand. Reports go to `out`, errors to `err`.
inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Long-term treatment effects from an experimental and an observational sample", "ltfuse"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "ltfuse 1.0.0");

  const unsigned env_threads = default_thread_count();

  detail::EstimateArgs est;
  est.threads = env_threads;
  auto* e = app.add_subcommand("estimate", "Estimate the average effect on the primary outcome");
  e->add_option("--data", est.data, "Combined sample CSV")->required();
  e->add_option("--schema", est.schema, "Schema file")->required();
  e->add_option("--method", est.methods, "Estimators (comma separated or repeated)")->capture_default_str();
  detail::add_nuisance_options(e, est.nuisance);
  e->add_option("--experimental-design", est.design, "randomized or unconfounded")->capture_default_str();
  e->add_option("--bootstrap", est.bootstrap, "Bootstrap replicates (0 disables)")->capture_default_str();
  e->add_option("--seed", est.seed, "Seed for every stochastic step");
  e->add_option("--threads", est.threads, "Worker threads")->check(CLI::PositiveNumber);
  e->add_option("--out", est.out, "Write the JSON report to this file");
  e->add_flag("--no-timestamp", est.no_timestamp, "Omit the generation timestamp");

  detail::DiagnoseArgs dia;
  dia.threads = env_threads;
  auto* d = app.add_subcommand("diagnose", "Test the assumptions' implications");
  d->add_option("--data", dia.data, "Combined sample CSV")->required();
  d->add_option("--schema", dia.schema, "Schema file")->required();
  d->add_option("--tests", dia.tests, "lemma2, secondary-gap, surrogacy")->capture_default_str();
  d->add_option("--lemma2-method", dia.lemma2_method, "regression or permutation")->capture_default_str();
  d->add_option("--permutations", dia.permutations, "Permutations for the permutation test")->capture_default_str();
  d->add_option("--max-cells", dia.max_cells, "Cap on covariate cells when coarsening")->capture_default_str();
  d->add_option("--seed", dia.seed, "Seed for the permutation test");
  d->add_option("--threads", dia.threads, "Worker threads")->check(CLI::PositiveNumber);
  d->add_option("--out", dia.out, "Write the JSON report to this file");
  d->add_flag("--no-timestamp", dia.no_timestamp, "Omit the generation timestamp");

  detail::SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Draw a sample with known ground truth");
  s->add_option("--config", sim.config, "Linear simulation config (JSON)");
  s->add_flag("--discrete", sim.discrete, "Draw a random finite DGP and write its full population");
  s->add_flag("--unconfounded-experiment", sim.unconfounded_experiment,
              "Discrete only: experimental assignment depends on X");
  s->add_option("--x-support", sim.x_support)->capture_default_str();
  s->add_option("--latent-support", sim.latent_support)->capture_default_str();
  s->add_option("--noise-support", sim.noise_support)->capture_default_str();
  s->add_option("--seed", sim.seed, "Seed (overrides the config seed)");
  s->add_option("--out", sim.out, "Sample CSV")->required();
  s->add_option("--truth", sim.truth, "Truth JSON");
  s->add_option("--schema-out", sim.schema_out, "Schema file for the sample");
  s->add_flag("--no-timestamp", sim.no_timestamp, "Omit the generation timestamp");

  detail::BenchArgs bench;
  bench.threads = env_threads;
  auto* b = app.add_subcommand("bench", "Monte Carlo comparison of estimators on a simulation config");
  b->add_option("--config", bench.config, "Linear simulation config (JSON)")->required();
  b->add_option("--replicates", bench.replicates)->capture_default_str();
  b->add_option("--methods", bench.methods, "Estimators (comma separated or repeated)")->capture_default_str();
  detail::add_nuisance_options(b, bench.nuisance);
  b->add_option("--experimental-design", bench.design, "randomized or unconfounded")->capture_default_str();
  b->add_option("--seed", bench.seed, "Base seed; replicate r uses a seed derived from (seed, r)");
  b->add_option("--threads", bench.threads, "Worker threads")->check(CLI::PositiveNumber);
  b->add_option("--format", bench.format, "json or csv")->capture_default_str();
  b->add_option("--out", bench.out, "Write the report to this file");
  b->add_flag("--no-timestamp", bench.no_timestamp, "Omit the generation timestamp");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return exit_ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return exit_ok;
  } catch (const CLI::CallForVersion&) {
    out << app.version() << "\n";
    return exit_ok;
  } catch (const CLI::ParseError& ex) {
    err << "error: " << ex.what() << "\n";
    return exit_validation;
  }

  try {
    if (*e) return detail::run_estimate(est, out);
    if (*d) return detail::run_diagnose(dia, out);
    if (*s) return detail::run_simulate(sim, out);
    if (*b) return detail::run_bench(bench, out);
  } catch (const ValidationError& ex) {
    err << "error: " << ex.what() << "\n";
    return exit_validation;
  } catch (const EstimationError& ex) {
    err << "estimation error: " << ex.what() << "\n";
    return exit_estimation;
  } catch (const std::exception& ex) {
    err << "internal error: " << ex.what() << "\n";
    return exit_internal;
  }
  return exit_internal;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"ltfuse"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

} // namespace ltfuse::cli
