#include "kinrisk/inference.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>

#include "kinrisk/errors.hpp"
#include "kinrisk/stats.hpp"
#include "csv_util.hpp"
#include "parallel.hpp"

namespace kinrisk {

double Contrast::apply(std::span<const std::string> names, std::span<const double> values) const {
  double total = 0.0;
  for (const auto& [name, coef] : terms) {
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw ValidationError("contrast '" + label + "' references unknown coefficient '" + name + "'");
    total += coef * values[static_cast<std::size_t>(it - names.begin())];
  }
  return total;
}

Contrast parse_contrast(std::string_view text) {
  Contrast out;
  std::string_view expr = text;
  const auto eq = text.find('=');
  if (eq != std::string_view::npos) {
    out.label = detail::trim(std::string(text.substr(0, eq)));
    expr = text.substr(eq + 1);
  }
  std::string body;
  for (char c : expr) {
    if (!std::isspace(static_cast<unsigned char>(c))) body += c;
  }
  if (body.empty()) throw ValidationError("empty contrast '" + std::string(text) + "'");
  std::size_t pos = 0;
  while (pos < body.size()) {
    double sign = 1.0;
    if (body[pos] == '+' || body[pos] == '-') {
      sign = body[pos] == '-' ? -1.0 : 1.0;
      ++pos;
    } else if (pos != 0) {
      throw ValidationError("malformed contrast '" + std::string(text) + "'");
    }
    const auto next = body.find_first_of("+-", pos);
    std::string term = body.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    pos = next == std::string::npos ? body.size() : next;
    double coef = 1.0;
    const auto star = term.find('*');
    if (star != std::string::npos) {
      const auto num = term.substr(0, star);
      auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), coef);
      if (ec != std::errc() || ptr != num.data() + num.size()) {
        throw ValidationError("malformed coefficient in contrast '" + std::string(text) + "'");
      }
      term = term.substr(star + 1);
    }
    if (term.empty()) throw ValidationError("malformed contrast '" + std::string(text) + "'");
    out.terms.emplace_back(term, sign * coef);
  }
  if (out.label.empty()) out.label = body;
  return out;
}

std::vector<Contrast> default_contrasts(const FitResult& fit) {
  std::vector<Contrast> out;
  const auto names = fit.param_names();
  for (const auto& n : names) out.push_back({n, {{n, 1.0}}});
  if (fit.spec.interaction && fit.spec.basis.is_constant()) {
    for (const auto& w : fit.w_names) {
      out.push_back({"beta+theta_" + w, {{"beta", 1.0}, {"theta_" + w, 1.0}}});
    }
  }
  for (std::size_t a = 0; a < fit.z_names.size(); ++a) {
    for (std::size_t b = a + 1; b < fit.z_names.size(); ++b) {
      const std::string ga = "gamma_" + fit.z_names[a];
      const std::string gb = "gamma_" + fit.z_names[b];
      out.push_back({ga + "-" + gb, {{ga, 1.0}, {gb, -1.0}}});
    }
  }
  return out;
}

Summary summarize(std::vector<double> values) {
  if (values.empty()) throw ValidationError("no replicates to summarize");
  Summary s;
  s.sd = sample_sd(values);
  std::sort(values.begin(), values.end());
  s.lower = quantile_type7(values, 0.025);
  s.upper = quantile_type7(values, 0.975);
  return s;
}

namespace {

std::vector<RiskCurve> request_curves(const FitResult& fit, const Dataset& data, const BootstrapOptions& opts) {
  std::vector<RiskCurve> out;
  for (const auto& req : opts.curves) {
    RiskCurve c = req.stratum ? stratified_marginal(fit, data, req.carrier, req.stratum, opts.ages, req.independence)
                              : marginal_risk(fit, data, req.carrier, opts.ages, req.independence);
    c.label = req.label;
    out.push_back(std::move(c));
  }
  return out;
}

double draw_multiplier(std::mt19937_64& rng, MultiplierDist dist) {
  if (dist == MultiplierDist::unit) return 1.0;
  // Inverse transform on a 53-bit uniform in [0, 1).
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return -std::log1p(-u);
}

struct Replicate {
  bool ok = false;
  std::vector<double> coefs;
  std::vector<std::vector<double>> curves;
};

}  // namespace

BootstrapResult multiplier_bootstrap(const Dataset& data, const ModelSpec& spec, const EmConfig& cfg,
                                     const BootstrapOptions& opts, const FitResult* point) {
  if (opts.B < 1) throw ValidationError("bootstrap needs B >= 1");
  if (opts.threads < 1) throw ValidationError("thread count must be >= 1");
  if (!opts.curves.empty()) {
    if (opts.ages.empty()) throw ValidationError("bootstrap curves need an age grid");
  }

  FitResult own;
  if (!point) {
    own = fit(data, spec, cfg);
    point = &own;
  }

  BootstrapResult res;
  res.B = opts.B;
  res.seed = opts.seed;
  res.names = point->param_names();
  res.point = point->coefficients();
  res.ages = opts.ages;
  res.curves = request_curves(*point, data, opts);

  // Family index of every record, in order of first appearance.
  const auto families = data.families();
  std::vector<std::size_t> family_of(data.size());
  {
    std::vector<std::pair<std::string, std::size_t>> lookup;
    for (std::size_t f = 0; f < families.size(); ++f) lookup.emplace_back(families[f], f);
    std::sort(lookup.begin(), lookup.end());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto it = std::lower_bound(lookup.begin(), lookup.end(), std::make_pair(data[i].family_id, std::size_t{0}));
      family_of[i] = it->second;
    }
  }

  EmConfig rep_cfg = cfg;
  if (opts.warm_start) rep_cfg.init = point->params;

  std::vector<Replicate> reps(static_cast<std::size_t>(opts.B));
  auto run = [&](std::size_t r) {
    auto rng = make_stream(opts.seed, r);
    std::vector<double> family_weight(families.size());
    for (auto& v : family_weight) v = draw_multiplier(rng, opts.dist);
    std::vector<double> mult(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) mult[i] = family_weight[family_of[i]];
    Replicate out;
    try {
      const Dataset boot = data.reweighted(mult);
      const FitResult f = fit(boot, spec, rep_cfg);
      if (f.converged) {
        out.coefs = f.coefficients();
        for (auto& c : request_curves(f, boot, opts)) out.curves.push_back(std::move(c.risk));
        out.ok = true;
      }
    } catch (const Error&) {
      out.ok = false;
    }
    reps[r] = std::move(out);
  };

  detail::parallel_for(reps.size(), opts.threads, run);

  for (std::size_t r = 0; r < reps.size(); ++r) {
    if (!reps[r].ok) {
      res.dropped.push_back(static_cast<int>(r));
      continue;
    }
    res.coef_reps.push_back(std::move(reps[r].coefs));
    res.curve_reps.push_back(std::move(reps[r].curves));
  }
  if (res.coef_reps.empty()) throw NumericalError("every bootstrap replicate failed");
  if (static_cast<double>(res.dropped.size()) > 0.05 * opts.B) {
    res.warning = std::to_string(res.dropped.size()) + " of " + std::to_string(opts.B) +
                  " bootstrap replicates failed or did not converge";
  }

  const std::size_t P = res.point.size();
  res.se.resize(P);
  res.lower.resize(P);
  res.upper.resize(P);
  std::vector<double> column(res.coef_reps.size());
  for (std::size_t p = 0; p < P; ++p) {
    for (std::size_t r = 0; r < column.size(); ++r) column[r] = res.coef_reps[r][p];
    const auto s = summarize(column);
    res.se[p] = s.sd;
    res.lower[p] = s.lower;
    res.upper[p] = s.upper;
  }
  res.curve_se.assign(res.curves.size(), std::vector<double>(res.ages.size()));
  for (std::size_t c = 0; c < res.curves.size(); ++c) {
    auto& curve = res.curves[c];
    curve.lower.emplace(res.ages.size());
    curve.upper.emplace(res.ages.size());
    for (std::size_t a = 0; a < res.ages.size(); ++a) {
      for (std::size_t r = 0; r < column.size(); ++r) column[r] = res.curve_reps[r][c][a];
      const auto s = summarize(column);
      res.curve_se[c][a] = s.sd;
      (*curve.lower)[a] = s.lower;
      (*curve.upper)[a] = s.upper;
    }
  }
  return res;
}

std::vector<HrRow> hr_table(const FitResult& fit, const BootstrapResult& boot, const std::vector<Contrast>& contrasts) {
  const auto names = fit.param_names();
  const auto values = fit.coefficients();
  if (boot.names != names) throw ValidationError("bootstrap result does not belong to this model");
  std::vector<HrRow> rows;
  for (const auto& c : contrasts) {
    HrRow row;
    row.label = c.label;
    row.estimate = c.apply(names, values);
    row.hr = std::exp(row.estimate);
    std::vector<double> reps;
    reps.reserve(boot.coef_reps.size());
    for (const auto& r : boot.coef_reps) reps.push_back(c.apply(names, r));
    const auto s = summarize(reps);
    row.se = s.sd;
    row.lower = std::exp(s.lower);
    row.upper = std::exp(s.upper);
    if (row.se > 0.0) {
      row.p_value = 2.0 * (1.0 - normal_cdf(std::abs(row.estimate) / row.se));
    } else {
      row.p_value = row.estimate == 0.0 ? 1.0 : 0.0;
    }
    rows.push_back(row);
  }
  return rows;
}

double bic_value(double loglik, std::size_t k, std::size_t n) {
  return -2.0 * loglik + static_cast<double>(k) * std::log(static_cast<double>(n));
}

std::optional<std::size_t> select_min_bic(const std::vector<BicRow>& rows) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].ok) continue;
    if (!best || rows[i].bic < rows[*best].bic) best = i;
  }
  return best;
}

BicScan bic_scan(const Dataset& data, const EmConfig& cfg, std::span<const int> degrees,
                 std::span<const int> knot_counts, bool interaction, bool include_constant) {
  if (!include_constant && (degrees.empty() || knot_counts.empty())) throw ValidationError("BIC grid is empty");
  std::vector<double> events;
  double lo = data[0].y;
  double hi = data[0].y;
  for (const auto& r : data.records()) {
    if (r.delta == 1) events.push_back(r.y);
    lo = std::min(lo, r.y);
    hi = std::max(hi, r.y);
  }
  std::sort(events.begin(), events.end());

  BicScan scan;
  auto run = [&](BicRow row, const std::function<SplineBasis()>& make_basis) {
    try {
      const ModelSpec spec = make_spec(data, make_basis(), interaction);
      row.k = spec.n_params();
      const FitResult f = fit(data, spec, cfg);
      row.loglik = f.loglik;
      row.bic = bic_value(f.loglik, row.k, data.size());
      row.ok = f.converged;
      if (!f.converged) row.error = "did not converge";
    } catch (const Error& e) {
      row.ok = false;
      row.error = e.what();
    }
    scan.rows.push_back(std::move(row));
  };
  if (include_constant) {
    BicRow row;
    row.model = "constant";
    row.constant = true;
    run(row, [] { return SplineBasis::constant(); });
  }
  for (int d : degrees) {
    for (int k : knot_counts) {
      BicRow row;
      row.model = "degree " + std::to_string(d) + ", knots " + std::to_string(k);
      row.degree = d;
      row.knots = k;
      run(row, [&] { return place_knots(events, k, d, std::make_pair(lo, hi)); });
    }
  }
  scan.selected = select_min_bic(scan.rows);
  return scan;
}

void write_hr_table(std::ostream& out, const std::vector<HrRow>& rows, const BootstrapResult& boot) {
  out << "# seed=" << boot.seed << " B=" << boot.B << " retained=" << boot.coef_reps.size() << '\n';
  out << "label,log_hr,se,hr,lower,upper,p_value\n";
  for (const auto& r : rows) {
    out << r.label << ',' << format_double(r.estimate) << ',' << format_double(r.se) << ',' << format_double(r.hr)
        << ',' << format_double(r.lower) << ',' << format_double(r.upper) << ',' << format_double(r.p_value) << '\n';
  }
}

void write_bootstrap(std::ostream& out, const BootstrapResult& boot) {
  out << "# seed=" << boot.seed << " B=" << boot.B << " retained=" << boot.coef_reps.size()
      << " dropped=" << boot.dropped.size() << '\n';
  if (boot.warning) out << "# warning: " << *boot.warning << '\n';
  out << "quantity,estimate,se,lower,upper\n";
  for (std::size_t p = 0; p < boot.names.size(); ++p) {
    out << boot.names[p] << ',' << format_double(boot.point[p]) << ',' << format_double(boot.se[p]) << ','
        << format_double(boot.lower[p]) << ',' << format_double(boot.upper[p]) << '\n';
  }
  for (std::size_t c = 0; c < boot.curves.size(); ++c) {
    const auto& curve = boot.curves[c];
    for (std::size_t a = 0; a < boot.ages.size(); ++a) {
      out << "F[" << curve.label << "](" << format_double(boot.ages[a]) << ")," << format_double(curve.risk[a]) << ','
          << format_double(boot.curve_se[c][a]) << ',' << format_double((*curve.lower)[a]) << ','
          << format_double((*curve.upper)[a]) << '\n';
    }
  }
}

void write_bic_scan(std::ostream& out, const BicScan& scan) {
  out << "model,degree,knots,k,loglik,bic,ok,selected\n";
  for (std::size_t i = 0; i < scan.rows.size(); ++i) {
    const auto& r = scan.rows[i];
    out << '"' << r.model << "\"," << (r.constant ? std::string("NA") : std::to_string(r.degree)) << ','
        << r.knots << ',' << r.k << ',';
    if (r.ok) {
      out << format_double(r.loglik) << ',' << format_double(r.bic);
    } else {
      out << "NA,NA";
    }
    out << ',' << (r.ok ? 1 : 0) << ',' << (scan.selected == i ? 1 : 0) << '\n';
  }
}

}  // namespace kinrisk
