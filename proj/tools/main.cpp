// Command-line front end for the library: estimate effects from a CSV file,
// run simulation studies from scenario configs, trace partial-identification
// curves, and benchmark covariate-omission confounding strength.
//
// Exit codes: 0 success, 2 input/config error, 3 numeric/estimation error.
// Primary outputs (stdout and files) are byte-identical across reruns with
// the same config and seed; timing goes to stderr only.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tcace/data.hpp"
#include "tcace/estimators.hpp"
#include "tcace/inference.hpp"
#include "tcace/models.hpp"
#include "tcace/sensitivity.hpp"
#include "tcace/simulation.hpp"
#include "tcace/version.hpp"

namespace {

using nlohmann::ordered_json;

// Pipeline stage shown in error messages so a failure names the step that
// raised it.
std::string g_stage = "startup";
void stage(const std::string& s) { g_stage = s; }

std::string fmt(double v, const char* f = "%.2f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw tcace::Error(tcace::errc::io_error, "cannot open '" + path + "'");
  }
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// Empty path or "-" means stdout.
void emit(const std::string& path, const std::string& body) {
  if (path.empty() || path == "-") {
    std::fwrite(body.data(), 1, body.size(), stdout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw tcace::Error(tcace::errc::io_error, "cannot write '" + path + "'");
  }
  out << body;
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : csv) {
    if (c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

// "# key = value" header lines embedded in text/CSV outputs so every file
// records the producing tool, version, and resolved configuration.
std::string provenance(const ordered_json& cfg) {
  std::string out = "# ";
  out += tcace::library_name;
  out += ' ';
  out += tcace::library_version;
  out += '\n';
  for (const auto& [key, value] : cfg.items()) {
    out += "# " + key + " = ";
    out += value.is_string() ? value.get<std::string>() : value.dump();
    out += '\n';
  }
  return out;
}

ordered_json json_doc(const char* command, const ordered_json& cfg) {
  ordered_json doc;
  doc["tool"] = tcace::library_name;
  doc["version"] = tcace::library_version;
  doc["command"] = command;
  doc["config"] = cfg;
  return doc;
}

// ---------------------------------------------------------------------------
// Shared dataset options
// ---------------------------------------------------------------------------

struct DataArgs {
  std::string input;
  tcace::ColumnSchema schema;
  std::string covariates_csv;
  bool no_intercept = false;
};

void add_data_options(CLI::App* cmd, DataArgs* a) {
  cmd->add_option("--input", a->input, "CSV file with study and target rows")
      ->required();
  cmd->add_option("--col-s", a->schema.s, "study-membership column")
      ->capture_default_str();
  cmd->add_option("--col-z", a->schema.z, "assignment column")
      ->capture_default_str();
  cmd->add_option("--col-d", a->schema.d, "treatment-received column")
      ->capture_default_str();
  cmd->add_option("--col-y", a->schema.y, "outcome column")
      ->capture_default_str();
  cmd->add_option("--col-c-proxy", a->schema.c_proxy,
                  "target compliance-proxy column")
      ->capture_default_str();
  cmd->add_option("--col-d-target", a->schema.d_target,
                  "target treatment-receipt column")
      ->capture_default_str();
  cmd->add_option("--covariates", a->covariates_csv,
                  "comma-separated covariate columns "
                  "(default: auto-detect x1..xp)");
  cmd->add_flag("--no-intercept", a->no_intercept,
                "do not prepend an intercept column");
}

tcace::Dataset load_from(DataArgs& a) {
  a.schema.covariates = split_list(a.covariates_csv);
  a.schema.add_intercept = !a.no_intercept;
  stage("load-data");
  return tcace::load_dataset(a.input, a.schema);
}

// Covariate names in dataset column order, reproducing the loader's
// auto-detection (x<number> header names sorted by suffix) when no explicit
// list was given.
std::vector<std::string> covariate_names(const DataArgs& a) {
  if (!a.schema.covariates.empty()) return a.schema.covariates;
  std::ifstream in(a.input);
  std::string header;
  if (!in || !std::getline(in, header)) {
    throw tcace::Error(tcace::errc::io_error, "cannot open '" + a.input + "'");
  }
  if (!header.empty() && header.back() == '\r') header.pop_back();
  std::vector<std::pair<long, std::string>> found;
  std::string cell;
  std::stringstream ss(header);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && std::isspace(static_cast<unsigned char>(cell.back())))
      cell.pop_back();
    std::size_t b = 0;
    while (b < cell.size() && std::isspace(static_cast<unsigned char>(cell[b])))
      ++b;
    cell = cell.substr(b);
    if (cell.size() < 2 || cell[0] != 'x') continue;
    bool digits = true;
    for (std::size_t k = 1; k < cell.size(); ++k) {
      if (!std::isdigit(static_cast<unsigned char>(cell[k]))) digits = false;
    }
    if (digits) found.emplace_back(std::stol(cell.substr(1)), cell);
  }
  std::sort(found.begin(), found.end());
  std::vector<std::string> names;
  for (auto& [num, name] : found) names.push_back(std::move(name));
  return names;
}

ordered_json columns_echo(const DataArgs& a,
                          const std::vector<std::string>& names) {
  ordered_json j;
  j["input"] = a.input;
  j["columns"] = {{"s", a.schema.s},
                  {"z", a.schema.z},
                  {"d", a.schema.d},
                  {"y", a.schema.y},
                  {"c_proxy", a.schema.c_proxy},
                  {"d_target", a.schema.d_target}};
  j["covariates"] = names;
  j["add_intercept"] = !a.no_intercept;
  return j;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

enum class CliEstimator { weighted, wls, mr, itt, pc };

const char* cli_estimator_name(CliEstimator e) {
  switch (e) {
    case CliEstimator::weighted: return "weighted";
    case CliEstimator::wls: return "wls";
    case CliEstimator::mr: return "mr";
    case CliEstimator::itt: return "itt";
    case CliEstimator::pc: return "partial-compliance";
  }
  return "unknown";
}

std::vector<CliEstimator> parse_estimators(const std::string& csv) {
  std::vector<CliEstimator> out;
  for (const std::string& name : split_list(csv)) {
    if (name == "weighted") {
      out.push_back(CliEstimator::weighted);
    } else if (name == "wls") {
      out.push_back(CliEstimator::wls);
    } else if (name == "mr") {
      out.push_back(CliEstimator::mr);
    } else if (name == "itt") {
      out.push_back(CliEstimator::itt);
    } else if (name == "pc" || name == "partial-compliance" ||
               name == "partial_compliance") {
      out.push_back(CliEstimator::pc);
    } else {
      throw tcace::Error(tcace::errc::bad_config,
                         "unknown estimator '" + name + "'");
    }
  }
  if (out.empty()) {
    throw tcace::Error(tcace::errc::bad_config, "no estimators requested");
  }
  return out;
}

double point_of(CliEstimator kind, const tcace::Dataset& ds,
                const tcace::WeightSet& w) {
  switch (kind) {
    case CliEstimator::weighted: return tcace::weighted_tcace(ds, w).point;
    case CliEstimator::wls: return tcace::wls_tcace(ds, w).point;
    case CliEstimator::mr:
      return tcace::mr_tcace(ds, w, tcace::fit_outcome_models(ds)).point;
    case CliEstimator::itt: return tcace::weighted_itt(ds, w).point;
    case CliEstimator::pc: return tcace::partial_compliance_tcace(ds, w).point;
  }
  throw tcace::Error(tcace::errc::invalid_argument, "unknown estimator kind");
}

struct EstimateArgs {
  DataArgs data;
  std::string estimators_csv = "weighted,wls,mr,itt";
  double treatment_prob = 0.5;
  CLI::Option* treatment_prob_opt = nullptr;
  double level = 0.95;
  int bootstrap_b = 500;
  std::uint64_t seed = 0;
  std::string output;
};

int run_estimate(EstimateArgs& args) {
  stage("validate-config");
  if (!(args.level > 0.0 && args.level < 1.0)) {
    throw tcace::Error(tcace::errc::bad_config,
                       "confidence level must lie in (0,1)");
  }
  const std::vector<CliEstimator> wanted =
      parse_estimators(args.estimators_csv);
  const bool known_mode = args.treatment_prob_opt->count() > 0;

  const tcace::Dataset ds = load_from(args.data);
  stage("validate-data");
  const tcace::ValidationReport report = tcace::validate(ds);

  stage("selection-model");
  const tcace::LogisticFit selection = tcace::fit_selection_model(ds);
  stage("treatment-model");
  const tcace::TreatmentModel treatment =
      known_mode ? tcace::TreatmentModel::known(args.treatment_prob)
                 : tcace::fit_treatment_model(ds);
  stage("weights");
  const tcace::WeightSet weights =
      tcace::compute_weights(ds, selection, treatment);
  const tcace::Theta theta = tcace::weighted_components(ds, weights);

  std::vector<tcace::CausalEstimate> estimates;
  std::vector<std::size_t> boot_pos;  // indices into `estimates` needing a
                                      // resampling-based standard error
  for (CliEstimator kind : wanted) {
    stage(std::string("estimate-") + cli_estimator_name(kind));
    tcace::CausalEstimate est;
    switch (kind) {
      case CliEstimator::weighted:
        est = tcace::weighted_tcace(ds, weights);
        break;
      case CliEstimator::wls:
        est = tcace::wls_tcace(ds, weights);
        break;
      case CliEstimator::mr:
        est = tcace::mr_tcace(ds, weights, tcace::fit_outcome_models(ds));
        break;
      case CliEstimator::itt:
        est = tcace::weighted_itt(ds, weights);
        break;
      case CliEstimator::pc:
        est = tcace::partial_compliance_tcace(ds, weights);
        break;
    }
    tcace::VarianceResult var;
    bool have_var = false;
    if (known_mode && kind == CliEstimator::weighted) {
      var = tcace::sandwich_logistic(ds, selection, treatment, theta);
      have_var = true;
    } else if (known_mode && kind == CliEstimator::itt) {
      var = tcace::sandwich_logistic(ds, selection, treatment, theta,
                                     tcace::grad_g_itt(theta));
      have_var = true;
    } else if (known_mode && kind == CliEstimator::wls) {
      var = tcace::sandwich_wls(ds, weights, selection,
                                tcace::fit_wls(ds, weights));
      have_var = true;
    } else {
      boot_pos.push_back(estimates.size());
    }
    if (have_var) {
      est.se = var.se;
      est.variance_mode = var.mode;
      const tcace::Interval ci = tcace::wald_ci(est.point, var.se, args.level);
      est.ci_lo = ci.lo;
      est.ci_hi = ci.hi;
      est.level = args.level;
    }
    estimates.push_back(std::move(est));
  }

  if (!boot_pos.empty()) {
    stage("bootstrap");
    tcace::BootstrapOptions bopts;
    bopts.b = args.bootstrap_b;
    bopts.seed = args.seed;
    const tcace::BootstrapResult boot = tcace::bootstrap_multi(
        ds,
        [&](const tcace::Dataset& r) {
          const tcace::LogisticFit rsel = tcace::fit_selection_model(r);
          const tcace::TreatmentModel rtm =
              known_mode ? tcace::TreatmentModel::known(args.treatment_prob)
                         : tcace::fit_treatment_model(r);
          const tcace::WeightSet rw = tcace::compute_weights(r, rsel, rtm);
          tcace::Vec v(static_cast<Eigen::Index>(boot_pos.size()));
          for (std::size_t j = 0; j < boot_pos.size(); ++j) {
            v[static_cast<Eigen::Index>(j)] =
                point_of(wanted[boot_pos[j]], r, rw);
          }
          return v;
        },
        static_cast<Eigen::Index>(boot_pos.size()), bopts);
    for (std::size_t j = 0; j < boot_pos.size(); ++j) {
      tcace::CausalEstimate& est = estimates[boot_pos[j]];
      est.se = boot.se[static_cast<Eigen::Index>(j)];
      est.variance_mode = "bootstrap";
      est.diagnostics["bootstrap_b"] = static_cast<double>(args.bootstrap_b);
      const tcace::Interval ci = tcace::wald_ci(est.point, est.se, args.level);
      est.ci_lo = ci.lo;
      est.ci_hi = ci.hi;
      est.level = args.level;
    }
  }

  ordered_json cfg = columns_echo(args.data, covariate_names(args.data));
  cfg["estimators"] = ordered_json::array();
  for (CliEstimator kind : wanted) cfg["estimators"].push_back(cli_estimator_name(kind));
  cfg["treatment_prob"] =
      known_mode ? ordered_json(args.treatment_prob) : ordered_json(nullptr);
  cfg["level"] = args.level;
  cfg["bootstrap_b"] = args.bootstrap_b;
  cfg["seed"] = args.seed;

  ordered_json doc = json_doc("estimate", cfg);
  doc["validation"] = report.to_json();
  doc["selection_model"] = selection.to_json();
  doc["treatment_model"] =
      known_mode ? ordered_json{{"known_prob", args.treatment_prob}}
                 : treatment.fit.to_json();
  doc["weights"] = {{"clamped_selection", weights.clamped_selection},
                    {"clamped_treatment", weights.clamped_treatment}};
  doc["estimates"] = ordered_json::array();
  for (const tcace::CausalEstimate& est : estimates) {
    doc["estimates"].push_back(est.to_json());
  }
  if (report.target_with_proxy > 0) {
    doc["proxy_diagnostic"] =
        tcace::proxy_compliance_diagnostic(ds, weights).to_json();
  }
  stage("write-output");
  emit(args.output, doc.dump(2) + "\n");
  return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

tcace::ScenarioKind parse_kind_name(const std::string& v) {
  using K = tcace::ScenarioKind;
  if (v == "standard_rct" || v == "rct") return K::standard_rct;
  if (v == "observational" || v == "obs") return K::observational;
  if (v == "exclusion_violation" || v == "exclusion")
    return K::exclusion_violation;
  if (v == "principal_ignorability_violation" || v == "pi")
    return K::principal_ignorability_violation;
  if (v == "sensitivity_confounded" || v == "confounded")
    return K::sensitivity_confounded;
  throw tcace::Error(tcace::errc::bad_config, "unknown scenario '" + v + "'");
}

ordered_json spec_echo(const tcace::ScenarioSpec& s) {
  ordered_json j;
  j["kind"] = tcace::scenario_kind_name(s.kind);
  j["total_units"] = s.total_units;
  j["r_prime"] = s.r_prime;
  j["dim_x"] = s.dim_x;
  j["trials"] = s.trials;
  j["seed"] = s.seed;
  j["bootstrap_b"] = s.bootstrap_b;
  j["lambda"] = s.lambda;
  j["dim_v"] = s.dim_v;
  j["kappa"] = s.kappa;
  j["beta0"] = s.beta0;
  j["noise_sd"] = s.noise_sd;
  j["treatment_prob"] = s.treatment_prob;
  return j;
}

struct SimulateArgs {
  std::string config_path;
  std::string scenario;
  long long total_units = 0;
  double r_prime = 0, lambda = 0, kappa = 0, beta0 = 0, noise_sd = 0,
         treatment_prob = 0;
  long long dim_x = 0, dim_v = 0;
  int trials = 0, bootstrap_b = 0;
  std::uint64_t seed = 0;
  std::string estimators_csv = "weighted,wls,mr,itt";
  std::vector<double> gammas;
  std::string out_text, out_csv, out_json;
  CLI::Option *o_scenario = nullptr, *o_total = nullptr, *o_rprime = nullptr,
              *o_dimx = nullptr, *o_trials = nullptr, *o_seed = nullptr,
              *o_boot = nullptr, *o_lambda = nullptr, *o_dimv = nullptr,
              *o_kappa = nullptr, *o_beta0 = nullptr, *o_noise = nullptr,
              *o_tp = nullptr;
};

std::vector<tcace::EstimatorKind> parse_study_estimators(
    const std::string& csv) {
  std::vector<tcace::EstimatorKind> out;
  for (CliEstimator e : parse_estimators(csv)) {
    switch (e) {
      case CliEstimator::weighted: out.push_back(tcace::EstimatorKind::weighted); break;
      case CliEstimator::wls: out.push_back(tcace::EstimatorKind::wls); break;
      case CliEstimator::mr: out.push_back(tcace::EstimatorKind::mr); break;
      case CliEstimator::itt: out.push_back(tcace::EstimatorKind::itt); break;
      case CliEstimator::pc:
        throw tcace::Error(tcace::errc::bad_config,
                           "partial-compliance is not a study estimator");
    }
  }
  return out;
}

int run_simulate(SimulateArgs& args) {
  tcace::ScenarioSpec spec;
  if (!args.config_path.empty()) {
    stage("read-config");
    spec = tcace::parse_scenario(read_file(args.config_path));
  }
  stage("validate-config");
  if (args.o_scenario->count()) spec.kind = parse_kind_name(args.scenario);
  if (args.o_total->count()) spec.total_units = args.total_units;
  if (args.o_rprime->count()) spec.r_prime = args.r_prime;
  if (args.o_dimx->count()) spec.dim_x = args.dim_x;
  if (args.o_trials->count()) spec.trials = args.trials;
  if (args.o_seed->count()) spec.seed = args.seed;
  if (args.o_boot->count()) spec.bootstrap_b = args.bootstrap_b;
  if (args.o_lambda->count()) spec.lambda = args.lambda;
  if (args.o_dimv->count()) spec.dim_v = args.dim_v;
  if (args.o_kappa->count()) spec.kappa = args.kappa;
  if (args.o_beta0->count()) spec.beta0 = args.beta0;
  if (args.o_noise->count()) spec.noise_sd = args.noise_sd;
  if (args.o_tp->count()) spec.treatment_prob = args.treatment_prob;
  tcace::validate_spec(spec);

  ordered_json cfg = spec_echo(spec);
  std::string text, csv;
  ordered_json doc = json_doc("simulate", cfg);
  if (spec.kind == tcace::ScenarioKind::sensitivity_confounded) {
    stage("run-sensitivity-study");
    const tcace::SensitivityStudyTable table =
        args.gammas.empty()
            ? tcace::run_sensitivity_study(spec)
            : tcace::run_sensitivity_study(spec, args.gammas);
    text = provenance(cfg) + table.to_text();
    csv = provenance(cfg) + table.to_csv();
    doc["table"] = table.to_json();
  } else {
    stage("validate-config");
    const std::vector<tcace::EstimatorKind> kinds =
        parse_study_estimators(args.estimators_csv);
    stage("run-study");
    const tcace::StudyTable table = tcace::run_study(spec, kinds);
    text = provenance(cfg) + table.to_text();
    csv = provenance(cfg) + table.to_csv();
    doc["table"] = table.to_json();
  }
  stage("write-output");
  if (!args.out_csv.empty()) emit(args.out_csv, csv);
  if (!args.out_json.empty()) emit(args.out_json, doc.dump(2) + "\n");
  if (!args.out_text.empty() || (args.out_csv.empty() && args.out_json.empty())) {
    emit(args.out_text, text);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// sensitivity
// ---------------------------------------------------------------------------

std::vector<double> parse_grid_spec(const std::string& s) {
  double part[3] = {0, 0, 0};
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const std::size_t next = i < 2 ? s.find(':', pos) : s.size();
    if (next == std::string::npos) {
      throw tcace::Error(tcace::errc::bad_config,
                         "--gamma-grid expects lo:hi:step");
    }
    const char* first = s.data() + pos;
    const char* last = s.data() + next;
    const auto res = std::from_chars(first, last, part[i]);
    if (res.ec != std::errc() || res.ptr != last) {
      throw tcace::Error(tcace::errc::bad_config,
                         "--gamma-grid expects lo:hi:step");
    }
    pos = next + 1;
  }
  const double lo = part[0], hi = part[1], step = part[2];
  if (!(lo >= 1.0) || hi < lo || !(step > 0.0)) {
    throw tcace::Error(tcace::errc::bad_config,
                       "--gamma-grid needs lo >= 1, hi >= lo, step > 0");
  }
  const long count = std::lround(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> grid;
  grid.reserve(static_cast<std::size_t>(count));
  for (long k = 0; k < count; ++k) {
    grid.push_back(lo + static_cast<double>(k) * step);
  }
  return grid;
}

// Error-bar chart of the identification intervals (solid) and, when present,
// the bootstrap confidence bands (dashed).
std::string svg_sensitivity_chart(const tcace::SensitivityReport& rep,
                                  double level) {
  const double W = 760, H = 480, ml = 72, mrg = 24, mt = 46, mb = 58;
  std::string s =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"760\" height=\"480\" "
      "viewBox=\"0 0 760 480\">\n"
      "<!-- effect ranges by sensitivity parameter; solid bars are "
      "identification intervals, dashed bars bootstrap bands -->\n"
      "<rect width=\"760\" height=\"480\" fill=\"white\"/>\n"
      "<g font-family=\"sans-serif\" font-size=\"12\" fill=\"#111\">\n";
  if (rep.rows.empty()) {
    s += "<text x=\"24\" y=\"40\">empty sensitivity grid</text>\n</g>\n</svg>\n";
    return s;
  }
  double xmin = rep.rows.front().gamma, xmax = rep.rows.back().gamma;
  if (xmax - xmin < 1e-12) {
    xmin -= 0.05;
    xmax += 0.05;
  }
  double ymin = 0.0, ymax = 0.0;
  bool any = false;
  const auto eat = [&](double v) {
    if (!std::isfinite(v)) return;
    if (!any) {
      ymin = ymax = v;
      any = true;
    } else {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  };
  eat(rep.point);
  for (const tcace::GammaRow& r : rep.rows) {
    if (r.interval_defined) {
      eat(r.interval.lo);
      eat(r.interval.hi);
    }
    if (r.boot_defined) {
      eat(r.boot.lo);
      eat(r.boot.hi);
    }
  }
  eat(0.0);
  if (ymax - ymin < 1e-12) {
    ymin -= 0.5;
    ymax += 0.5;
  }
  const double pad = 0.08 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  const auto X = [&](double g) {
    return ml + (g - xmin) / (xmax - xmin) * (W - ml - mrg);
  };
  const auto Y = [&](double v) {
    return H - mb - (v - ymin) / (ymax - ymin) * (H - mt - mb);
  };
  const auto line = [&](double x1, double y1, double x2, double y2,
                        const char* style) {
    s += "<line x1=\"" + fmt(x1) + "\" y1=\"" + fmt(y1) + "\" x2=\"" +
         fmt(x2) + "\" y2=\"" + fmt(y2) + "\" " + style + "/>\n";
  };
  // horizontal grid and y tick labels
  for (int t = 0; t <= 5; ++t) {
    const double v = ymin + (ymax - ymin) * t / 5.0;
    line(ml, Y(v), W - mrg, Y(v), "stroke=\"#e0e0e0\"");
    s += "<text x=\"" + fmt(ml - 8) + "\" y=\"" + fmt(Y(v) + 4) +
         "\" text-anchor=\"end\">" + fmt(v, "%.3g") + "</text>\n";
  }
  // zero reference
  line(ml, Y(0.0), W - mrg, Y(0.0),
       "stroke=\"#b05050\" stroke-dasharray=\"2 3\"");
  // axes
  line(ml, mt, ml, H - mb, "stroke=\"#111\"");
  line(ml, H - mb, W - mrg, H - mb, "stroke=\"#111\"");
  // x ticks (at most ~13 labels)
  const std::size_t nrows = rep.rows.size();
  const std::size_t stride = std::max<std::size_t>(1, (nrows + 12) / 13);
  for (std::size_t i = 0; i < nrows; i += stride) {
    const double g = rep.rows[i].gamma;
    line(X(g), H - mb, X(g), H - mb + 5, "stroke=\"#111\"");
    s += "<text x=\"" + fmt(X(g)) + "\" y=\"" + fmt(H - mb + 19) +
         "\" text-anchor=\"middle\">" + fmt(g, "%.3g") + "</text>\n";
  }
  s += "<text x=\"" + fmt((ml + W - mrg) / 2) + "\" y=\"" + fmt(H - 14) +
       "\" text-anchor=\"middle\">sensitivity parameter (selection odds "
       "bound)</text>\n";
  s += "<text transform=\"translate(20," + fmt((mt + H - mb) / 2) +
       ") rotate(-90)\" text-anchor=\"middle\">effect range</text>\n";
  // per-gamma bars
  for (const tcace::GammaRow& r : rep.rows) {
    const double xg = X(r.gamma);
    if (r.interval_defined) {
      const double ylo = Y(r.interval.lo), yhi = Y(r.interval.hi);
      line(xg, yhi, xg, ylo, "stroke=\"#111\" stroke-width=\"1.8\"");
      line(xg - 5, ylo, xg + 5, ylo, "stroke=\"#111\" stroke-width=\"1.8\"");
      line(xg - 5, yhi, xg + 5, yhi, "stroke=\"#111\" stroke-width=\"1.8\"");
    }
    if (r.boot_defined) {
      const double xb = xg + 6;
      const double ylo = Y(r.boot.lo), yhi = Y(r.boot.hi);
      line(xb, yhi, xb, ylo,
           "stroke=\"#2d6ea8\" stroke-width=\"1.4\" stroke-dasharray=\"5 3\"");
      line(xb - 4, ylo, xb + 4, ylo, "stroke=\"#2d6ea8\" stroke-width=\"1.4\"");
      line(xb - 4, yhi, xb + 4, yhi, "stroke=\"#2d6ea8\" stroke-width=\"1.4\"");
    }
  }
  // point estimate reference
  if (std::isfinite(rep.point)) {
    line(ml, Y(rep.point), W - mrg, Y(rep.point),
         "stroke=\"#888\" stroke-dasharray=\"1 3\"");
    s += "<circle cx=\"" + fmt(X(rep.rows.front().gamma)) + "\" cy=\"" +
         fmt(Y(rep.point)) + "\" r=\"3.2\" fill=\"#2d6ea8\"/>\n";
  }
  // smallest bound whose range reaches zero
  if (rep.gamma_star && *rep.gamma_star >= xmin && *rep.gamma_star <= xmax) {
    const double xs = X(*rep.gamma_star);
    line(xs, mt, xs, H - mb, "stroke=\"#777\" stroke-dasharray=\"4 3\"");
    s += "<text x=\"" + fmt(xs + 4) + "\" y=\"" + fmt(mt + 12) +
         "\">gamma* = " + fmt(*rep.gamma_star, "%.3f") + "</text>\n";
  }
  // title + legend
  s += "<text x=\"" + fmt(ml) +
       "\" y=\"20\" font-size=\"14\" font-weight=\"bold\">partial "
       "identification of the weighted effect</text>\n";
  line(W - 250, 14, W - 222, 14, "stroke=\"#111\" stroke-width=\"1.8\"");
  s += "<text x=\"" + fmt(W - 216) + "\" y=\"18\">identified interval</text>\n";
  line(W - 250, 32, W - 222, 32,
       "stroke=\"#2d6ea8\" stroke-width=\"1.4\" stroke-dasharray=\"5 3\"");
  s += "<text x=\"" + fmt(W - 216) + "\" y=\"36\">bootstrap " +
       fmt(level * 100.0, "%.0f") + "% band</text>\n";
  s += "</g>\n</svg>\n";
  return s;
}

struct SensitivityArgs {
  DataArgs data;
  std::string grid_spec;
  std::vector<double> gammas;
  int bootstrap_b = 0;
  std::uint64_t seed = 0;
  double level = 0.95;
  double treatment_prob = 0.5;
  CLI::Option* treatment_prob_opt = nullptr;
  double gamma_max = 20.0;
  std::string output, out_csv, svg_path;
};

int run_sensitivity(SensitivityArgs& args) {
  stage("validate-config");
  if (!(args.level > 0.0 && args.level < 1.0)) {
    throw tcace::Error(tcace::errc::bad_config,
                       "confidence level must lie in (0,1)");
  }
  if (!args.grid_spec.empty() && !args.gammas.empty()) {
    throw tcace::Error(tcace::errc::bad_config,
                       "--gamma-grid and --gamma are mutually exclusive");
  }
  tcace::SensitivityOptions opts;
  if (!args.grid_spec.empty()) {
    opts.grid = parse_grid_spec(args.grid_spec);
  } else if (!args.gammas.empty()) {
    opts.grid = args.gammas;
    std::sort(opts.grid.begin(), opts.grid.end());
  }
  opts.bootstrap_b = args.bootstrap_b;
  opts.seed = args.seed;
  opts.level = args.level;
  opts.gamma_max = args.gamma_max;
  if (args.treatment_prob_opt->count() > 0) {
    opts.known_treatment_prob = args.treatment_prob;
  }

  const tcace::Dataset ds = load_from(args.data);
  stage("sensitivity-curve");
  const tcace::SensitivityReport rep = tcace::sensitivity_curve(ds, opts);

  ordered_json cfg = columns_echo(args.data, covariate_names(args.data));
  cfg["gamma_grid"] = opts.grid.empty() ? tcace::default_gamma_grid() : opts.grid;
  cfg["bootstrap_b"] = args.bootstrap_b;
  cfg["seed"] = args.seed;
  cfg["level"] = args.level;
  cfg["gamma_max"] = args.gamma_max;
  cfg["treatment_prob"] = args.treatment_prob_opt->count() > 0
                              ? ordered_json(args.treatment_prob)
                              : ordered_json(nullptr);

  ordered_json doc = json_doc("sensitivity", cfg);
  doc["report"] = rep.to_json();
  stage("write-output");
  emit(args.output, doc.dump(2) + "\n");
  if (!args.out_csv.empty()) {
    emit(args.out_csv, provenance(cfg) + rep.to_csv());
  }
  if (!args.svg_path.empty()) {
    emit(args.svg_path, svg_sensitivity_chart(rep, args.level));
  }
  return 0;
}

// ---------------------------------------------------------------------------
// benchmark
// ---------------------------------------------------------------------------

struct BenchmarkArgs {
  DataArgs data;
  std::string restrict_csv;
  std::string output;
};

int run_benchmark(BenchmarkArgs& args) {
  const tcace::Dataset ds = load_from(args.data);
  stage("covariate-names");
  std::vector<std::string> names = covariate_names(args.data);
  // Map names onto dataset columns: column 0 is the intercept when one was
  // prepended, and omission never targets it.
  Eigen::Index offset = 0;
  if (ds.p() == static_cast<Eigen::Index>(names.size()) + 1) {
    offset = 1;
  } else if (ds.p() != static_cast<Eigen::Index>(names.size())) {
    throw tcace::Error(tcace::errc::dimension_mismatch,
                       "cannot align covariate names with dataset columns");
  }
  std::vector<std::pair<std::string, Eigen::Index>> targets;
  if (args.restrict_csv.empty()) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      const Eigen::Index col = static_cast<Eigen::Index>(i) + offset;
      if (col == 0) continue;  // leading constant column under --no-intercept
      targets.emplace_back(names[i], col);
    }
  } else {
    for (const std::string& want : split_list(args.restrict_csv)) {
      const auto it = std::find(names.begin(), names.end(), want);
      if (it == names.end()) {
        throw tcace::Error(tcace::errc::bad_config,
                           "unknown covariate '" + want + "'");
      }
      targets.emplace_back(
          want, static_cast<Eigen::Index>(it - names.begin()) + offset);
    }
  }
  if (targets.empty()) {
    throw tcace::Error(tcace::errc::bad_config, "no covariates to benchmark");
  }

  stage("selection-model");
  const tcace::LogisticFit selection = tcace::fit_selection_model(ds);

  std::vector<std::pair<std::string, double>> rows;
  std::vector<std::pair<std::string, std::string>> failures;
  for (const auto& [name, col] : targets) {
    stage("benchmark-" + name);
    try {
      rows.emplace_back(name, tcace::benchmark_gamma_omission(ds, selection, col));
    } catch (const tcace::Error& e) {
      failures.emplace_back(name, e.what());
    }
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second < b.second : a.first < b.first;
  });

  ordered_json cfg = columns_echo(args.data, names);
  if (!args.restrict_csv.empty()) cfg["restrict"] = split_list(args.restrict_csv);

  double gmax = 1.0;
  for (const auto& [name, g] : rows) gmax = std::max(gmax, g);
  std::string text = provenance(cfg);
  {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-16s %10s\n", "omitted", "gamma_hat");
    text += buf;
    for (const auto& [name, g] : rows) {
      const double denom = std::max(gmax - 1.0, 1e-9);
      int len = static_cast<int>(std::lround(40.0 * (g - 1.0) / denom));
      len = std::clamp(len, 0, 40);
      std::snprintf(buf, sizeof buf, "%-16s %10.4f  %s\n", name.c_str(), g,
                    std::string(static_cast<std::size_t>(len), '#').c_str());
      text += buf;
    }
    for (const auto& [name, err] : failures) {
      std::snprintf(buf, sizeof buf, "%-16s     failed  %s\n", name.c_str(),
                    err.c_str());
      text += buf;
    }
  }

  ordered_json doc = json_doc("benchmark", cfg);
  doc["rows"] = ordered_json::array();
  for (const auto& [name, g] : rows) {
    doc["rows"].push_back({{"omitted", name}, {"gamma_hat", g}});
  }
  doc["failures"] = ordered_json::array();
  for (const auto& [name, err] : failures) {
    doc["failures"].push_back({{"omitted", name}, {"error", err}});
  }

  stage("write-output");
  std::fwrite(text.data(), 1, text.size(), stdout);
  if (!args.output.empty()) emit(args.output, doc.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"estimation toolkit for target-population complier effects"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads,
                 "worker thread cap (overrides TCACE_THREADS)");
  app.set_config("--flags-from", "", "read command-line flags from a file");

  EstimateArgs ea;
  CLI::App* est = app.add_subcommand(
      "estimate", "estimate complier effects from a CSV dataset");
  add_data_options(est, &ea.data);
  est->add_option("--estimators", ea.estimators_csv,
                  "comma list of weighted,wls,mr,itt,pc")
      ->capture_default_str();
  ea.treatment_prob_opt = est->add_option(
      "--treatment-prob", ea.treatment_prob,
      "known assignment probability; omit to fit a treatment model and "
      "bootstrap all standard errors");
  est->add_option("--level", ea.level, "confidence level")
      ->capture_default_str();
  est->add_option("--bootstrap", ea.bootstrap_b, "bootstrap replicates")
      ->check(CLI::Range(2, 1000000))
      ->capture_default_str();
  est->add_option("--seed", ea.seed, "bootstrap seed")->capture_default_str();
  est->add_option("--output", ea.output, "JSON report path (default stdout)");

  SimulateArgs sa;
  CLI::App* sim = app.add_subcommand(
      "simulate", "run a synthetic study from a scenario config");
  sim->add_option("--config", sa.config_path,
                  "scenario file with key = value lines");
  sa.o_scenario = sim->add_option("--scenario", sa.scenario,
                                  "rct|observational|exclusion|pi|confounded");
  sa.o_total = sim->add_option("--total", sa.total_units, "pooled draw size");
  sa.o_rprime = sim->add_option("--r-prime", sa.r_prime,
                                "study-selection slope multiplier");
  sa.o_dimx = sim->add_option("--dim-x", sa.dim_x, "covariate count");
  sa.o_trials = sim->add_option("--trials", sa.trials, "trial count");
  sa.o_seed = sim->add_option("--seed", sa.seed, "root seed");
  sa.o_boot = sim->add_option("--bootstrap", sa.bootstrap_b,
                              "bootstrap replicates for resampled intervals");
  sa.o_lambda = sim->add_option("--lambda", sa.lambda,
                                "direct assignment effect on the outcome");
  sa.o_dimv = sim->add_option("--dim-v", sa.dim_v, "latent confounder count");
  sa.o_kappa = sim->add_option("--kappa", sa.kappa,
                               "latent confounder strength in selection");
  sa.o_beta0 = sim->add_option("--beta0", sa.beta0, "selection intercept");
  sa.o_noise = sim->add_option("--noise-sd", sa.noise_sd,
                               "outcome noise standard deviation");
  sa.o_tp = sim->add_option("--treatment-prob", sa.treatment_prob,
                            "known assignment probability");
  sim->add_option("--estimators", sa.estimators_csv,
                  "comma list of weighted,wls,mr,itt")
      ->capture_default_str();
  sim->add_option("--gamma", sa.gammas,
                  "coverage grid for the confounded scenario (each value caps "
                  "the spread between units' weight distortions)");
  sim->add_option("--output-text", sa.out_text, "text table path");
  sim->add_option("--output-csv", sa.out_csv, "CSV table path");
  sim->add_option("--output-json", sa.out_json, "JSON table path");

  SensitivityArgs na;
  CLI::App* sens = app.add_subcommand(
      "sensitivity", "trace partial-identification intervals over a grid");
  add_data_options(sens, &na.data);
  sens->add_option("--gamma-grid", na.grid_spec, "grid as lo:hi:step");
  sens->add_option("--gamma", na.gammas, "explicit grid values");
  sens->add_option("--bootstrap", na.bootstrap_b,
                   "bootstrap replicates for endpoint bands (0 = off)")
      ->capture_default_str();
  sens->add_option("--seed", na.seed, "bootstrap seed")->capture_default_str();
  sens->add_option("--level", na.level, "band confidence level")
      ->capture_default_str();
  na.treatment_prob_opt = sens->add_option(
      "--treatment-prob", na.treatment_prob,
      "known assignment probability; omit to fit a treatment model");
  sens->add_option("--gamma-max", na.gamma_max,
                   "search cap for the zero-crossing bound")
      ->capture_default_str();
  sens->add_option("--output", na.output, "JSON report path (default stdout)");
  sens->add_option("--output-csv", na.out_csv, "CSV curve path");
  sens->add_option("--svg", na.svg_path, "error-bar chart path");

  BenchmarkArgs ba;
  CLI::App* bench = app.add_subcommand(
      "benchmark", "score observed covariates by omission-refit odds ratios");
  add_data_options(bench, &ba.data);
  bench->add_option("--restrict", ba.restrict_csv,
                    "comma list of covariates to score (default: all)");
  bench->add_option("--output", ba.output, "JSON report path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (threads > 0) {
    setenv("TCACE_THREADS", std::to_string(threads).c_str(), 1);
  }

  const auto t0 = std::chrono::steady_clock::now();
  const char* name = "";
  int rc = 0;
  try {
    if (est->parsed()) {
      name = "estimate";
      rc = run_estimate(ea);
    } else if (sim->parsed()) {
      name = "simulate";
      rc = run_simulate(sa);
    } else if (sens->parsed()) {
      name = "sensitivity";
      rc = run_sensitivity(na);
    } else {
      name = "benchmark";
      rc = run_benchmark(ba);
    }
  } catch (const tcace::Error& e) {
    std::fprintf(stderr, "error [stage %s] %s\n", g_stage.c_str(), e.what());
    return tcace::is_input_error(e.code()) ? 2 : 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error [stage %s] %s\n", g_stage.c_str(), e.what());
    return 3;
  }
  const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
  std::fprintf(stderr, "# %s finished in %.3f s\n", name, dt.count());
  return rc;
}
