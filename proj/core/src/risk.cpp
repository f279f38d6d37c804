#include "kinrisk/risk.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>

#include "csv_util.hpp"
#include "kinrisk/errors.hpp"

namespace kinrisk {

namespace {

void check_ages(std::span<const double> ages) {
  if (ages.empty()) throw ValidationError("age grid is empty");
  for (std::size_t k = 0; k < ages.size(); ++k) {
    if (!std::isfinite(ages[k]) || ages[k] < 0.0) throw ValidationError("ages must be finite and non-negative");
    if (k > 0 && !(ages[k] > ages[k - 1])) throw ValidationError("ages must be strictly increasing");
  }
}

void check_status(int status, const char* what) {
  if (status != 0 && status != 1) throw ValidationError(std::string(what) + " must be 0 or 1");
}

double linear_term(const FitResult& fit, int carrier, std::span<const double> w, std::span<const double> z) {
  const auto& p = fit.params;
  if (w.size() != p.eta.size() || z.size() != p.gamma.size()) {
    throw ValidationError("covariate profile length does not match the fit");
  }
  double lin = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    lin += p.eta[j] * w[j];
    if (carrier == 1 && !p.theta.empty()) lin += p.theta[j] * w[j];
  }
  for (std::size_t j = 0; j < z.size(); ++j) lin += p.gamma[j] * z[j];
  return lin;
}

// Cumulative genotype-adjusted baseline sum_{t_k <= age} dL(t_k) e^{beta_c(t_k)} at each age.
std::vector<double> genetic_cumhaz(const FitResult& fit, std::span<const double> times,
                                   std::span<const double> jumps, int carrier, int second,
                                   std::span<const double> ages) {
  std::vector<double> out(ages.size());
  double total = 0.0;
  std::size_t k = 0;
  for (std::size_t a = 0; a < ages.size(); ++a) {
    while (k < times.size() && times[k] <= ages[a]) {
      double log_hr = 0.0;
      if (carrier == 1) log_hr += fit.beta(times[k]);
      if (second == 1) log_hr += fit.beta2(times[k]);
      total += jumps[k] * std::exp(log_hr);
      ++k;
    }
    out[a] = total;
  }
  return out;
}

std::string profile_label(int carrier, std::span<const double> w, std::span<const double> z) {
  std::string label = carrier == 1 ? "carrier" : "noncarrier";
  for (double v : w) label += " w=" + format_double(v);
  for (double v : z) label += " z=" + format_double(v);
  return label;
}

RiskCurve marginal_over(const FitResult& fit, const Dataset& data, int carrier, std::span<const double> ages,
                        bool independence, const std::vector<std::size_t>& rows) {
  check_status(carrier, "carrier");
  check_ages(ages);
  fit.spec.check_against(data);
  if (rows.empty()) throw ValidationError("marginal risk over an empty set of records");
  if (!independence && fit.posteriors.size() != data.size()) {
    throw ValidationError("posterior-weighted marginal requires the dataset the model was fitted on");
  }
  const auto& bl = fit.params.baseline;
  const bool two = fit.spec.second_gene.has_value();
  const auto H0 = genetic_cumhaz(fit, bl.times, bl.jumps, carrier, 0, ages);
  const auto H1 = two ? genetic_cumhaz(fit, bl.times, bl.jumps, carrier, 1, ages) : H0;

  std::vector<double> surv(ages.size(), 0.0);
  double total_weight = 0.0;
  for (std::size_t i : rows) {
    const auto& r = data[i];
    double weight = r.weight;
    // Conditional distribution of the second gene given the carrier status.
    double pu1 = 0.0;
    if (independence) {
      if (two) {
        const double a = r.config_probs[2 * static_cast<std::size_t>(carrier)];
        const double b = r.config_probs[2 * static_cast<std::size_t>(carrier) + 1];
        pu1 = a + b > 0.0 ? b / (a + b) : 0.0;
      }
    } else if (two) {
      const double a = fit.posteriors(i, 2 * static_cast<std::size_t>(carrier));
      const double b = fit.posteriors(i, 2 * static_cast<std::size_t>(carrier) + 1);
      weight *= a + b;
      pu1 = a + b > 0.0 ? b / (a + b) : 0.0;
    } else {
      const double qc = fit.posteriors.carrier(i);
      weight *= carrier == 1 ? qc : 1.0 - qc;
    }
    if (weight == 0.0) continue;
    const double mult = std::exp(linear_term(fit, carrier, r.w, r.z));
    for (std::size_t a = 0; a < ages.size(); ++a) {
      double s = (1.0 - pu1) * std::exp(-H0[a] * mult);
      if (pu1 > 0.0) s += pu1 * std::exp(-H1[a] * mult);
      surv[a] += weight * s;
    }
    total_weight += weight;
  }
  if (!(total_weight > 0.0)) throw ValidationError("marginal risk weights are all zero");

  RiskCurve curve;
  curve.ages.assign(ages.begin(), ages.end());
  curve.risk.resize(ages.size());
  for (std::size_t a = 0; a < ages.size(); ++a) {
    curve.risk[a] = std::clamp(1.0 - surv[a] / total_weight, 0.0, 1.0);
  }
  curve.label = std::string(carrier == 1 ? "carrier" : "noncarrier") + " marginal";
  return curve;
}

}  // namespace

double RiskCurve::at(double age) const {
  if (ages.empty() || age < ages.front()) throw ValidationError("age " + format_double(age) + " precedes the curve");
  const auto it = std::upper_bound(ages.begin(), ages.end(), age);
  return risk[static_cast<std::size_t>(it - ages.begin()) - 1];
}

RiskCurve conditional_risk(const FitResult& fit, int carrier, std::span<const double> w,
                           std::span<const double> z, std::span<const double> ages, int second_carrier) {
  check_status(carrier, "carrier");
  check_status(second_carrier, "second-gene carrier");
  check_ages(ages);
  if (second_carrier == 1 && !fit.spec.second_gene) throw ValidationError("fit has no second gene");
  const double mult = std::exp(linear_term(fit, carrier, w, z));
  const auto& bl = fit.params.baseline;
  const auto H = genetic_cumhaz(fit, bl.times, bl.jumps, carrier, second_carrier, ages);
  RiskCurve curve;
  curve.ages.assign(ages.begin(), ages.end());
  curve.risk.resize(ages.size());
  for (std::size_t a = 0; a < ages.size(); ++a) curve.risk[a] = -std::expm1(-H[a] * mult);
  curve.label = profile_label(carrier, w, z);
  return curve;
}

RiskCurve marginal_risk(const FitResult& fit, const Dataset& data, int carrier, std::span<const double> ages,
                        bool independence) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return marginal_over(fit, data, carrier, ages, independence, rows);
}

RiskCurve stratified_marginal(const FitResult& fit, const Dataset& data, int carrier,
                              const std::function<bool(const RelativeRecord&)>& stratum,
                              std::span<const double> ages, bool independence) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (stratum(data[i])) rows.push_back(i);
  }
  if (rows.empty()) throw ValidationError("stratum contains no records");
  return marginal_over(fit, data, carrier, ages, independence, rows);
}

void ExternalBaseline::validate() const {
  if (ages.empty() || ages.size() != cumhaz.size()) {
    throw ValidationError("external baseline needs matching, non-empty age and hazard columns");
  }
  for (std::size_t k = 0; k < ages.size(); ++k) {
    if (!std::isfinite(ages[k]) || !std::isfinite(cumhaz[k]) || cumhaz[k] < 0.0) {
      throw ValidationError("external cumulative hazard must be finite and non-negative");
    }
    if (k > 0 && (!(ages[k] > ages[k - 1]) || cumhaz[k] < cumhaz[k - 1])) {
      throw ValidationError("external baseline must have increasing ages and non-decreasing hazard");
    }
  }
}

RiskCurve calibrate_external_baseline(const FitResult& fit, const ExternalBaseline& external, int carrier,
                                      std::span<const double> w, std::span<const double> z,
                                      std::span<const double> ages) {
  external.validate();
  check_status(carrier, "carrier");
  check_ages(ages);
  if (ages.back() > external.ages.back()) {
    throw ValidationError("external baseline ends at age " + format_double(external.ages.back()) +
                          ", before the requested age " + format_double(ages.back()));
  }
  std::vector<double> jumps(external.ages.size());
  jumps[0] = external.cumhaz[0];
  for (std::size_t k = 1; k < jumps.size(); ++k) jumps[k] = external.cumhaz[k] - external.cumhaz[k - 1];
  const double mult = std::exp(linear_term(fit, carrier, w, z));
  const auto H = genetic_cumhaz(fit, external.ages, jumps, carrier, 0, ages);
  RiskCurve curve;
  curve.ages.assign(ages.begin(), ages.end());
  curve.risk.resize(ages.size());
  for (std::size_t a = 0; a < ages.size(); ++a) curve.risk[a] = -std::expm1(-H[a] * mult);
  curve.label = profile_label(carrier, w, z) + " external";
  return curve;
}

std::vector<double> age_grid(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo)) throw ValidationError("invalid age grid");
  std::vector<double> out;
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
  for (std::size_t k = 0; k <= count; ++k) out.push_back(lo + static_cast<double>(k) * step);
  return out;
}

void write_curves(std::ostream& out, const std::vector<RiskCurve>& curves) {
  out << "age,risk,lower,upper,label\n";
  for (const auto& c : curves) {
    for (std::size_t a = 0; a < c.ages.size(); ++a) {
      out << format_double(c.ages[a]) << ',' << format_double(c.risk[a]) << ',';
      if (c.lower) out << format_double((*c.lower)[a]);
      out << ',';
      if (c.upper) out << format_double((*c.upper)[a]);
      out << ',' << detail::quote_if_needed(c.label) << '\n';
    }
  }
}

std::vector<RiskCurve> read_curves(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("curve file is empty");
  const auto header = detail::split_csv_line(line);
  std::map<std::string, std::size_t> col;
  for (std::size_t k = 0; k < header.size(); ++k) col[std::string(detail::trim(header[k]))] = k;
  if (!col.count("age") || !col.count("risk")) throw ParseError(1, "curve file needs 'age' and 'risk' columns");

  std::vector<RiskCurve> curves;
  std::map<std::string, std::size_t> index;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    auto cell = [&](const std::string& name) -> std::string {
      const auto it = col.find(name);
      return it == col.end() || it->second >= cells.size() ? std::string() : cells[it->second];
    };
    const std::string label = cell("label");
    auto [it, fresh] = index.try_emplace(label, curves.size());
    if (fresh) {
      curves.emplace_back();
      curves.back().label = label;
    }
    auto& c = curves[it->second];
    const double age = detail::parse_number(cell("age"), row, "age");
    const double risk = detail::parse_number(cell("risk"), row, "risk");
    if (risk < 0.0 || risk > 1.0) throw ParseError(row, "risk outside [0, 1]");
    if (!c.ages.empty() && !(age > c.ages.back())) throw ParseError(row, "ages must increase within a curve");
    c.ages.push_back(age);
    c.risk.push_back(risk);
    const std::string lo = cell("lower");
    const std::string hi = cell("upper");
    if (!detail::is_missing(lo)) {
      if (!c.lower) c.lower.emplace();
      c.lower->push_back(detail::parse_number(lo, row, "lower"));
    }
    if (!detail::is_missing(hi)) {
      if (!c.upper) c.upper.emplace();
      c.upper->push_back(detail::parse_number(hi, row, "upper"));
    }
  }
  for (auto& c : curves) {
    if ((c.lower && c.lower->size() != c.ages.size()) || (c.upper && c.upper->size() != c.ages.size())) {
      throw ValidationError("curve '" + c.label + "' has incomplete confidence bands");
    }
  }
  if (curves.empty()) throw ValidationError("curve file has no rows");
  return curves;
}

std::vector<RiskCurve> read_curves(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open curve file " + path.string());
  return read_curves(in);
}

}  // namespace kinrisk
