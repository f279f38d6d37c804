// kinrisk command-line tool: fit, risk, bootstrap, simulate, generate, bic, samplesize.
//
// Exit codes: 0 success, 2 invalid input, 3 numerical failure or non-convergence, 4 I/O.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "kinrisk/data_model.hpp"
#include "kinrisk/em_engine.hpp"
#include "kinrisk/errors.hpp"
#include "kinrisk/fit_io.hpp"
#include "kinrisk/inference.hpp"
#include "kinrisk/risk.hpp"
#include "kinrisk/simulate.hpp"
#include "kinrisk/trial_design.hpp"

#ifndef KINRISK_VERSION
#define KINRISK_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace kinrisk;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;
constexpr int kExitIo = 4;

class NotConverged : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Key/value echo of a run, enough to repeat it.
class Manifest {
public:
  Manifest(std::string command, int argc, char** argv) : command_(std::move(command)) {
    for (int i = 0; i < argc; ++i) {
      if (i) argv_ += ' ';
      argv_ += argv[i];
    }
  }
  void add(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }
  void add(const std::string& key, double value) { add(key, format_double(value)); }
  void add(const std::string& key, long long value) { add(key, std::to_string(value)); }

  void write(const fs::path& dir) const {
    std::ofstream out(dir / "manifest.txt");
    if (!out) throw IoError("cannot write " + (dir / "manifest.txt").string());
    out << "kinrisk " << KINRISK_VERSION << '\n';
    out << "command: " << command_ << '\n';
    out << "argv: " << argv_ << '\n';
    for (const auto& [k, v] : entries_) out << k << ": " << v << '\n';
  }

private:
  std::string command_;
  std::string argv_;
  std::vector<std::pair<std::string, std::string>> entries_;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  return out;
}

fs::path prepare_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir);
  return fs::path(dir);
}

std::vector<double> parse_list(const std::string& text, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw ValidationError(std::string("cannot read ") + what + " entry '" + item + "'");
    }
  }
  if (out.empty()) throw ValidationError(std::string(what) + " is empty");
  return out;
}

// "lo:hi:step" or a comma list.
std::vector<double> parse_ages(const std::string& text) {
  if (text.find(':') != std::string::npos) {
    std::string spec = text;
    std::replace(spec.begin(), spec.end(), ':', ',');
    const auto v = parse_list(spec, "age range");
    if (v.size() < 2 || v.size() > 3) throw ValidationError("age range must be lo:hi or lo:hi:step");
    return age_grid(v[0], v[1], v.size() == 3 ? v[2] : 1.0);
  }
  return parse_list(text, "ages");
}

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  for (double v : parse_list(text, what)) {
    if (v != std::floor(v)) throw ValidationError(std::string(what) + " must be integers");
    out.push_back(static_cast<int>(v));
  }
  return out;
}

struct DataOptions {
  std::string data;
  bool exclude_probands = false;
  double prevalence = 0.0;
};

struct ModelOptions {
  std::optional<int> knots;
  std::optional<int> degree;
  bool constant_beta = false;
  bool interaction = false;
  double tol = 1e-8;
  int max_iters = 2000;
};

void add_data_options(CLI::App* cmd, DataOptions& o) {
  cmd->add_option("--data", o.data, "relatives CSV")->required();
  cmd->add_flag("--exclude-probands", o.exclude_probands, "drop rows flagged in the is_proband column");
  cmd->add_option("--prevalence", o.prevalence, "carrier prevalence used for Mendelian inference")
      ->check(CLI::Range(0.0, 0.999999));
}

void add_model_options(CLI::App* cmd, ModelOptions& o) {
  auto* knots = cmd->add_option("--knots", o.knots, "interior knots for beta(t) at event-time quantiles");
  auto* degree = cmd->add_option("--degree", o.degree, "B-spline degree for beta(t)");
  cmd->add_flag("--constant-beta", o.constant_beta, "time-invariant genetic effect")->excludes(knots)->excludes(degree);
  cmd->add_flag("--interaction", o.interaction, "include genotype x W interaction terms");
  cmd->add_option("--tol", o.tol, "relative log-likelihood convergence tolerance");
  cmd->add_option("--max-iters", o.max_iters, "EM iteration cap");
}

ParsedDataset load(const DataOptions& o, Manifest& m) {
  CsvSchema schema;
  schema.exclude_probands = o.exclude_probands;
  schema.rules.prevalence = o.prevalence;
  auto parsed = parse_relatives(fs::path(o.data), schema);
  m.add("data", o.data);
  m.add("exclude_probands", o.exclude_probands ? "true" : "false");
  m.add("prevalence", o.prevalence);
  m.add("records", static_cast<long long>(parsed.data.size()));
  m.add("ingestion", parsed.report.to_text());
  if (parsed.report.dropped_missing_y || parsed.report.dropped_probands) {
    std::cerr << parsed.report.to_text() << '\n';
  }
  return parsed;
}

ModelSpec build_spec(const Dataset& data, const ModelOptions& o, Manifest& m) {
  SplineBasis basis = SplineBasis::constant();
  if (!o.constant_beta && (o.knots || o.degree)) {
    std::vector<double> events;
    for (const auto& r : data.records()) {
      if (r.delta) events.push_back(r.y);
    }
    basis = place_knots(events, o.knots.value_or(0), o.degree.value_or(3));
  }
  std::optional<SplineBasis> second;
  if (data.two_gene()) second = basis;
  m.add("model", basis.is_constant() ? std::string("constant beta")
                                     : "spline degree " + std::to_string(basis.degree()) + ", " +
                                           std::to_string(basis.interior_knots().size()) + " interior knots");
  m.add("interaction", o.interaction ? "true" : "false");
  m.add("tol", o.tol);
  m.add("max_iters", static_cast<long long>(o.max_iters));
  return make_spec(data, basis, o.interaction, second);
}

EmConfig em_config(const ModelOptions& o) {
  EmConfig cfg;
  cfg.tol = o.tol;
  cfg.max_iters = o.max_iters;
  cfg.validate();
  return cfg;
}

FitResult run_fit(const Dataset& data, const ModelSpec& spec, const EmConfig& cfg) {
  return spec.second_gene ? fit_multigene(data, spec, cfg) : fit(data, spec, cfg);
}

std::string trace_tail(const FitResult& f) {
  std::ostringstream out;
  out.precision(12);
  const std::size_t n = f.loglik_trace.size();
  const std::size_t first = n > 5 ? n - 5 : 0;
  for (std::size_t k = first; k < n; ++k) out << (k > first ? ", " : "") << f.loglik_trace[k];
  return out.str();
}

void write_point_hr(std::ostream& out, const FitResult& f) {
  out << "label,estimate,hr\n";
  for (const auto& c : default_contrasts(f)) {
    const double est = c.apply(f.param_names(), f.coefficients());
    out << '"' << c.label << "\"," << format_double(est) << ',' << format_double(std::exp(est)) << '\n';
  }
}

std::vector<CurveRequest> default_curve_requests(bool independence) {
  return {{"carrier", 1, {}, independence}, {"noncarrier", 0, {}, independence}};
}

std::vector<double> default_ages(const FitResult& f) {
  const auto& t = f.params.baseline.times;
  const double hi = t.empty() ? 100.0 : std::floor(t.back());
  return age_grid(0.0, std::max(hi, 1.0));
}

// ---- fit -------------------------------------------------------------------

struct FitCmd {
  DataOptions data;
  ModelOptions model;
  std::string out = ".";
  int boot_B = 0;
  std::optional<std::uint64_t> seed;
  int threads = 1;
};

int cmd_fit(const FitCmd& o, Manifest& m) {
  const auto dir = prepare_dir(o.out);
  const auto parsed = load(o.data, m);
  const auto spec = build_spec(parsed.data, o.model, m);
  const auto cfg = em_config(o.model);
  if (o.boot_B > 0 && !o.seed) throw ValidationError("--boot-B requires --seed");
  const auto f = run_fit(parsed.data, spec, cfg);
  write_fit(dir / "fit.json", f);
  m.add("loglik", f.loglik);
  m.add("iterations", static_cast<long long>(f.iters));
  m.add("converged", f.converged ? "true" : "false");
  {
    auto out = open_out(dir / "hr_table.csv");
    if (o.boot_B > 0) {
      BootstrapOptions bo;
      bo.B = o.boot_B;
      bo.seed = *o.seed;
      bo.threads = o.threads;
      const auto boot = multiplier_bootstrap(parsed.data, spec, cfg, bo, &f);
      write_hr_table(out, hr_table(f, boot, default_contrasts(f)), boot);
      m.add("seed", static_cast<long long>(*o.seed));
      m.add("boot_B", static_cast<long long>(o.boot_B));
      if (boot.warning) std::cerr << "warning: " << *boot.warning << '\n';
    } else {
      write_point_hr(out, f);
    }
  }
  m.write(dir);
  if (!f.converged) {
    throw NotConverged("EM did not converge in " + std::to_string(f.iters) + " iterations; last log-likelihoods: " +
                       trace_tail(f));
  }
  std::cout << "loglik " << format_double(f.loglik) << " after " << f.iters << " iterations\n";
  return 0;
}

// ---- risk ------------------------------------------------------------------

struct RiskCmd {
  std::string fit;
  std::optional<std::string> data;
  std::string out = ".";
  std::optional<std::string> ages;
  std::optional<std::string> profile;
  std::optional<std::string> external;
  bool posterior_weighted = false;
};

struct Profile {
  int carrier = 1;
  int second = 0;
  std::vector<double> w;
  std::vector<double> z;
};

Profile parse_profile(const std::string& text, const FitResult& f) {
  Profile p;
  p.w.assign(f.w_names.size(), 0.0);
  p.z.assign(f.z_names.size(), 0.0);
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ValidationError("profile entry '" + item + "' is not name=value");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    const std::string key = trim(item.substr(0, eq));
    const double value = parse_list(trim(item.substr(eq + 1)), "profile value")[0];
    auto set_in = [&](const std::vector<std::string>& names, std::vector<double>& dst, const std::string& name) {
      const auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end()) return false;
      dst[static_cast<std::size_t>(it - names.begin())] = value;
      return true;
    };
    if (key == "carrier") {
      p.carrier = static_cast<int>(value);
    } else if (key == "carrier2") {
      p.second = static_cast<int>(value);
    } else if (!set_in(f.w_names, p.w, key) && !set_in(f.z_names, p.z, key)) {
      throw ValidationError("profile names unknown covariate '" + key + "'");
    }
  }
  return p;
}

ExternalBaseline read_external(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open external baseline " + path);
  std::string line;
  std::getline(in, line);
  if (line.find("age") == std::string::npos) throw ParseError(1, "external baseline needs columns age,cumhaz");
  ExternalBaseline ext;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    const auto v = parse_list(line, "external baseline row");
    if (v.size() != 2) throw ParseError(row, "expected two columns");
    ext.ages.push_back(v[0]);
    ext.cumhaz.push_back(v[1]);
  }
  ext.validate();
  return ext;
}

int cmd_risk(const RiskCmd& o, Manifest& m) {
  const auto dir = prepare_dir(o.out);
  const auto f = read_fit(fs::path(o.fit));
  m.add("fit", o.fit);
  const auto ages = o.ages ? parse_ages(*o.ages) : default_ages(f);
  m.add("ages", o.ages.value_or("default"));
  std::vector<RiskCurve> curves;
  if (o.profile) {
    const auto p = parse_profile(*o.profile, f);
    m.add("profile", *o.profile);
    RiskCurve c;
    if (o.external) {
      c = calibrate_external_baseline(f, read_external(*o.external), p.carrier, p.w, p.z, ages);
      m.add("external", *o.external);
    } else {
      c = conditional_risk(f, p.carrier, p.w, p.z, ages, p.second);
    }
    c.label = *o.profile;
    curves.push_back(std::move(c));
  } else {
    if (!o.data) throw ValidationError("marginal curves need --data (or give --profile)");
    if (o.external) throw ValidationError("--external needs a --profile");
    const auto data = parse_relatives(fs::path(*o.data)).data;
    m.add("data", *o.data);
    m.add("independence", o.posterior_weighted ? "false" : "true");
    for (const auto& req : default_curve_requests(!o.posterior_weighted)) {
      auto c = marginal_risk(f, data, req.carrier, ages, req.independence);
      c.label = req.label;
      curves.push_back(std::move(c));
    }
  }
  auto out = open_out(dir / "curves.csv");
  write_curves(out, curves);
  m.write(dir);
  return 0;
}

// ---- bootstrap ---------------------------------------------------------------

struct BootCmd {
  DataOptions data;
  ModelOptions model;
  std::string out = ".";
  int boot_B = 200;
  std::uint64_t seed = 0;
  int threads = 1;
  std::optional<std::string> ages;
};

int cmd_bootstrap(const BootCmd& o, Manifest& m) {
  const auto dir = prepare_dir(o.out);
  const auto parsed = load(o.data, m);
  const auto spec = build_spec(parsed.data, o.model, m);
  const auto cfg = em_config(o.model);
  const auto f = run_fit(parsed.data, spec, cfg);
  if (!f.converged) throw NotConverged("point fit did not converge; last log-likelihoods: " + trace_tail(f));
  write_fit(dir / "fit.json", f);
  BootstrapOptions bo;
  bo.B = o.boot_B;
  bo.seed = o.seed;
  bo.threads = o.threads;
  bo.ages = o.ages ? parse_ages(*o.ages) : default_ages(f);
  if (!spec.second_gene) bo.curves = default_curve_requests(true);
  const auto boot = multiplier_bootstrap(parsed.data, spec, cfg, bo, &f);
  m.add("seed", static_cast<long long>(o.seed));
  m.add("boot_B", static_cast<long long>(o.boot_B));
  m.add("threads", static_cast<long long>(o.threads));
  m.add("ages", o.ages.value_or("default"));
  m.add("retained", static_cast<long long>(boot.coef_reps.size()));
  {
    auto out = open_out(dir / "bootstrap.csv");
    write_bootstrap(out, boot);
  }
  {
    auto out = open_out(dir / "hr_table.csv");
    write_hr_table(out, hr_table(f, boot, default_contrasts(f)), boot);
  }
  if (!boot.curves.empty()) {
    auto out = open_out(dir / "curves.csv");
    write_curves(out, boot.curves);
  }
  if (boot.warning) {
    std::cerr << "warning: " << *boot.warning << '\n';
    m.add("warning", *boot.warning);
  }
  m.write(dir);
  return 0;
}

// ---- simulate / generate -----------------------------------------------------

struct SimCmd {
  std::string out = ".";
  int reps = 100;
  int boot_B = 200;
  std::uint64_t seed = 0;
  double censor_rate = 0.4;
  std::size_t n = 2266;
  int threads = 1;
  std::optional<std::string> ages;
};

SimScenario scenario_from(std::size_t n, double censor_rate, std::uint64_t seed, Manifest& m) {
  SimScenario s;
  s.n = n;
  s.censor_target = censor_rate;
  s.seed = seed;
  s.validate();
  s.c_max = calibrate_censoring(s, censor_rate);
  m.add("n", static_cast<long long>(n));
  m.add("censor_rate", censor_rate);
  m.add("c_max", *s.c_max);
  m.add("seed", static_cast<long long>(seed));
  return s;
}

int cmd_simulate(const SimCmd& o, Manifest& m) {
  const auto dir = prepare_dir(o.out);
  const auto s = scenario_from(o.n, o.censor_rate, o.seed, m);
  ReplicationOptions ro;
  ro.reps = o.reps;
  ro.boot_B = o.boot_B;
  ro.threads = o.threads;
  if (o.ages) ro.ages = parse_ages(*o.ages);
  m.add("reps", static_cast<long long>(o.reps));
  m.add("boot_B", static_cast<long long>(o.boot_B));
  m.add("threads", static_cast<long long>(o.threads));
  const auto report = replicate(s, ro);
  auto out = open_out(dir / "report.csv");
  write_report(out, report);
  m.add("failures", static_cast<long long>(report.failures));
  m.write(dir);
  return 0;
}

struct GenCmd {
  std::string out = ".";
  std::uint64_t seed = 0;
  double censor_rate = 0.4;
  std::size_t n = 2266;
};

int cmd_generate(const GenCmd& o, Manifest& m) {
  const auto dir = prepare_dir(o.out);
  const auto s = scenario_from(o.n, o.censor_rate, o.seed, m);
  const auto sim = gen_dataset(s);
  {
    auto out = open_out(dir / "data.csv");
    write_relatives(out, sim.data);
  }
  {
    auto out = open_out(dir / "truth.csv");
    out << "family_id,relative_id,carrier,event_time\n";
    for (std::size_t i = 0; i < sim.data.size(); ++i) {
      out << sim.data[i].family_id << ',' << sim.data[i].relative_id << ',' << sim.truth.carrier[i] << ','
          << format_double(sim.truth.event_time[i]) << '\n';
    }
  }
  m.write(dir);
  return 0;
}

// ---- bic -----------------------------------------------------------------------

struct BicCmd {
  DataOptions data;
  std::string out = ".";
  std::string degrees = "1,2,3";
  std::string knot_counts = "0,1,2,3";
  bool interaction = false;
  double tol = 1e-8;
  int max_iters = 2000;
};

int cmd_bic(const BicCmd& o, Manifest& m) {
  const auto dir = prepare_dir(o.out);
  const auto parsed = load(o.data, m);
  EmConfig cfg;
  cfg.tol = o.tol;
  cfg.max_iters = o.max_iters;
  cfg.validate();
  const auto degrees = parse_int_list(o.degrees, "degrees");
  const auto knots = parse_int_list(o.knot_counts, "knot counts");
  m.add("degrees", o.degrees);
  m.add("knot_counts", o.knot_counts);
  m.add("interaction", o.interaction ? "true" : "false");
  const auto scan = bic_scan(parsed.data, cfg, degrees, knots, o.interaction);
  auto out = open_out(dir / "bic.csv");
  write_bic_scan(out, scan);
  if (!scan.selected) throw NumericalError("no model in the BIC grid could be fitted");
  std::cout << "selected: " << scan.rows[*scan.selected].model << '\n';
  m.add("selected", scan.rows[*scan.selected].model);
  m.write(dir);
  return 0;
}

// ---- samplesize ------------------------------------------------------------------

struct SizeCmd {
  std::string curves;
  std::string out = ".";
  std::optional<std::string> carrier_label;
  std::optional<std::string> noncarrier_label;
  std::string ages = "60,65,70,75";
  double horizon = 5.0;
  double alpha = 0.05;
  double power = 0.80;
  std::optional<int> round_digits;
};

const RiskCurve& pick_curve(const std::vector<RiskCurve>& curves, const std::optional<std::string>& label,
                            std::size_t fallback) {
  if (label) {
    for (const auto& c : curves) {
      if (c.label == *label) return c;
    }
    throw ValidationError("no curve labelled '" + *label + "'");
  }
  if (curves.size() <= fallback) throw ValidationError("curve file needs a carrier and a non-carrier curve");
  return curves[fallback];
}

int cmd_samplesize(const SizeCmd& o, Manifest& m) {
  const auto dir = prepare_dir(o.out);
  const auto curves = read_curves(fs::path(o.curves));
  const auto& carrier = pick_curve(curves, o.carrier_label, 0);
  const auto& noncarrier = pick_curve(curves, o.noncarrier_label, 1);
  const auto ages = parse_list(o.ages, "ages");
  const auto rows = design_table(carrier, noncarrier, ages, o.horizon, o.alpha, o.power, o.round_digits);
  auto out = open_out(dir / "design.csv");
  write_design_table(out, rows);
  m.add("curves", o.curves);
  m.add("carrier_curve", carrier.label);
  m.add("noncarrier_curve", noncarrier.label);
  m.add("ages", o.ages);
  m.add("horizon", o.horizon);
  m.add("alpha", o.alpha);
  m.add("power", o.power);
  m.add("round_digits", o.round_digits ? std::to_string(*o.round_digits) : std::string("none"));
  m.write(dir);
  write_design_table(std::cout, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Penetrance estimation from kin-cohort data with partially missing genotypes"};
  app.require_subcommand(1);
  app.set_version_flag("--version", KINRISK_VERSION);

  FitCmd fit_o;
  auto* fit_c = app.add_subcommand("fit", "fit the mixture model and write fit.json and hr_table.csv");
  add_data_options(fit_c, fit_o.data);
  add_model_options(fit_c, fit_o.model);
  fit_c->add_option("--out", fit_o.out, "output directory");
  fit_c->add_option("--boot-B", fit_o.boot_B, "bootstrap replicates for HR intervals (0: point estimates only)")
      ->check(CLI::NonNegativeNumber);
  fit_c->add_option("--seed", fit_o.seed, "bootstrap seed");
  fit_c->add_option("--threads", fit_o.threads, "worker threads")->check(CLI::PositiveNumber);

  RiskCmd risk_o;
  auto* risk_c = app.add_subcommand("risk", "cumulative risk curves from a fit");
  risk_c->add_option("--fit", risk_o.fit, "fit.json from 'fit'")->required();
  risk_c->add_option("--data", risk_o.data, "relatives CSV for marginal curves");
  risk_c->add_option("--out", risk_o.out, "output directory");
  risk_c->add_option("--ages", risk_o.ages, "lo:hi[:step] or comma list");
  risk_c->add_option("--profile", risk_o.profile, "conditional profile, e.g. carrier=1,male=0");
  risk_c->add_option("--external", risk_o.external, "external cumulative baseline CSV (age,cumhaz)");
  risk_c->add_flag("--posterior-weighted", risk_o.posterior_weighted, "weight marginals by posterior carrier probability");

  BootCmd boot_o;
  auto* boot_c = app.add_subcommand("bootstrap", "family multiplier bootstrap");
  add_data_options(boot_c, boot_o.data);
  add_model_options(boot_c, boot_o.model);
  boot_c->add_option("--out", boot_o.out, "output directory");
  boot_c->add_option("--boot-B", boot_o.boot_B, "replicates")->check(CLI::PositiveNumber);
  boot_c->add_option("--seed", boot_o.seed, "seed")->required();
  boot_c->add_option("--threads", boot_o.threads, "worker threads")->check(CLI::PositiveNumber);
  boot_c->add_option("--ages", boot_o.ages, "lo:hi[:step] or comma list");

  SimCmd sim_o;
  auto* sim_c = app.add_subcommand("simulate", "replication study on synthetic data");
  sim_c->add_option("--out", sim_o.out, "output directory");
  sim_c->add_option("--reps", sim_o.reps, "replications")->check(CLI::PositiveNumber);
  sim_c->add_option("--boot-B", sim_o.boot_B, "bootstrap replicates per replication")->check(CLI::NonNegativeNumber);
  sim_c->add_option("--seed", sim_o.seed, "seed")->required();
  sim_c->add_option("--censor-rate", sim_o.censor_rate, "target censoring fraction");
  sim_c->add_option("--n", sim_o.n, "records per dataset")->check(CLI::PositiveNumber);
  sim_c->add_option("--threads", sim_o.threads, "worker threads")->check(CLI::PositiveNumber);
  sim_c->add_option("--ages", sim_o.ages, "ages for risk summaries");

  GenCmd gen_o;
  auto* gen_c = app.add_subcommand("generate", "write one synthetic dataset");
  gen_c->add_option("--out", gen_o.out, "output directory");
  gen_c->add_option("--seed", gen_o.seed, "seed")->required();
  gen_c->add_option("--censor-rate", gen_o.censor_rate, "target censoring fraction");
  gen_c->add_option("--n", gen_o.n, "records")->check(CLI::PositiveNumber);

  BicCmd bic_o;
  auto* bic_c = app.add_subcommand("bic", "BIC scan over spline degree and knot count");
  add_data_options(bic_c, bic_o.data);
  bic_c->add_option("--out", bic_o.out, "output directory");
  bic_c->add_option("--degrees", bic_o.degrees, "comma list of degrees");
  bic_c->add_option("--knots", bic_o.knot_counts, "comma list of interior knot counts");
  bic_c->add_flag("--interaction", bic_o.interaction, "include genotype x W interaction terms");
  bic_c->add_option("--tol", bic_o.tol, "relative log-likelihood convergence tolerance");
  bic_c->add_option("--max-iters", bic_o.max_iters, "EM iteration cap");

  SizeCmd size_o;
  auto* size_c = app.add_subcommand("samplesize", "window risks and per-arm sample sizes from risk curves");
  size_c->add_option("--curves", size_o.curves, "curve CSV (age,risk,...,label)")->required();
  size_c->add_option("--out", size_o.out, "output directory");
  size_c->add_option("--carrier-label", size_o.carrier_label, "label of the carrier curve (default: first)");
  size_c->add_option("--noncarrier-label", size_o.noncarrier_label, "label of the non-carrier curve (default: second)");
  size_c->add_option("--ages", size_o.ages, "baseline ages");
  size_c->add_option("--horizon", size_o.horizon, "window length in years");
  size_c->add_option("--alpha", size_o.alpha, "two-sided significance level");
  size_c->add_option("--power", size_o.power, "power");
  size_c->add_option("--round", size_o.round_digits, "round window risks to this many decimals first");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  const auto* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  Manifest manifest(name, argc, argv);
  try {
    if (name == "fit") return cmd_fit(fit_o, manifest);
    if (name == "risk") return cmd_risk(risk_o, manifest);
    if (name == "bootstrap") return cmd_bootstrap(boot_o, manifest);
    if (name == "simulate") return cmd_simulate(sim_o, manifest);
    if (name == "generate") return cmd_generate(gen_o, manifest);
    if (name == "bic") return cmd_bic(bic_o, manifest);
    if (name == "samplesize") return cmd_samplesize(size_o, manifest);
  } catch (const ValidationError& e) {
    std::cerr << "kinrisk " << name << ": invalid input: " << e.what() << '\n';
    return kExitValidation;
  } catch (const NumericalError& e) {
    std::cerr << "kinrisk " << name << ": numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const NotConverged& e) {
    std::cerr << "kinrisk " << name << ": " << e.what() << '\n';
    return kExitNumerical;
  } catch (const IoError& e) {
    std::cerr << "kinrisk " << name << ": I/O error: " << e.what() << '\n';
    return kExitIo;
  }
  return kExitValidation;
}
