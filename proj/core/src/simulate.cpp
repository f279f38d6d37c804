#include "kinrisk/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "kinrisk/errors.hpp"
#include "kinrisk/inference.hpp"
#include "kinrisk/risk.hpp"
#include "kinrisk/stats.hpp"
#include "parallel.hpp"

namespace kinrisk {

namespace {

// Uniform on the open interval (0, 1) from the top 53 bits.
double open_uniform(std::mt19937_64& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

int bernoulli(std::mt19937_64& rng, double p) { return open_uniform(rng) < p ? 1 : 0; }

double draw_group(std::mt19937_64& rng, const SimScenario& s) {
  const double u = open_uniform(rng);
  double cum = 0.0;
  for (std::size_t g = 0; g < s.prob_values.size(); ++g) {
    cum += s.prob_freqs[g];
    if (u < cum) return s.prob_values[g];
  }
  return s.prob_values.back();
}

double draw_event_time(std::mt19937_64& rng, const SimScenario& s, double lp) {
  const double e = -std::log(open_uniform(rng));
  return s.scale * std::pow(e / std::exp(lp), 1.0 / s.shape);
}

// Event times of mc_n independent subjects, sorted, with prefix sums.
struct TimeSample {
  std::vector<double> sorted;
  std::vector<double> prefix;

  double censored_fraction(double c_max) const {
    const auto k = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), c_max) - sorted.begin());
    const double below = prefix[k] / c_max;
    return (below + static_cast<double>(sorted.size() - k)) / static_cast<double>(sorted.size());
  }
};

TimeSample sample_times(const SimScenario& s, std::size_t mc_n, std::uint64_t seed) {
  if (mc_n < 1) throw ValidationError("Monte Carlo sample size must be >= 1");
  auto rng = make_stream(seed, 0);
  TimeSample out;
  out.sorted.resize(mc_n);
  for (auto& t : out.sorted) {
    const int x = bernoulli(rng, draw_group(rng, s));
    const int w = bernoulli(rng, s.w_prob);
    const int z = bernoulli(rng, s.z_prob);
    t = draw_event_time(rng, s, s.linear_predictor(x, w, z));
  }
  std::sort(out.sorted.begin(), out.sorted.end());
  out.prefix.resize(mc_n + 1, 0.0);
  for (std::size_t i = 0; i < mc_n; ++i) out.prefix[i + 1] = out.prefix[i] + out.sorted[i];
  return out;
}

constexpr std::uint64_t kCalibrationSeed = 0x6b696e7269736bULL;

}  // namespace

void SimScenario::validate() const {
  if (n < 1) throw ValidationError("scenario needs n >= 1");
  if (!(shape > 0.0) || !(scale > 0.0)) throw ValidationError("Weibull shape and scale must be positive");
  for (double v : {beta, eta, theta, gamma}) {
    if (!std::isfinite(v)) throw ValidationError("scenario coefficients must be finite");
  }
  if (prob_values.empty() || prob_values.size() != prob_freqs.size()) {
    throw ValidationError("carrier-probability groups and frequencies must match in length");
  }
  double total = 0.0;
  for (std::size_t g = 0; g < prob_values.size(); ++g) {
    if (!(prob_values[g] >= 0.0 && prob_values[g] <= 1.0) || !(prob_freqs[g] >= 0.0)) {
      throw ValidationError("invalid carrier-probability group");
    }
    total += prob_freqs[g];
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("carrier-probability frequencies must sum to 1");
  if (!(w_prob >= 0.0 && w_prob <= 1.0) || !(z_prob >= 0.0 && z_prob <= 1.0)) {
    throw ValidationError("covariate probabilities must lie in [0, 1]");
  }
  if (!(censor_target > 0.0 && censor_target < 1.0)) throw ValidationError("censoring target must lie in (0, 1)");
  if (c_max && !(*c_max > 0.0)) throw ValidationError("c_max must be positive");
  if (!(family_size >= 1.0)) throw ValidationError("family size must be >= 1");
}

double SimScenario::linear_predictor(int x, double w, double z) const {
  return beta * x + eta * w + theta * w * x + gamma * z;
}

SimData gen_dataset(const SimScenario& scenario, std::uint64_t stream) {
  scenario.validate();
  const double c_max = scenario.c_max ? *scenario.c_max : calibrate_censoring(scenario, scenario.censor_target);
  auto rng = make_stream(scenario.seed, stream);
  const auto block = static_cast<std::size_t>(std::ceil(scenario.family_size - 1e-12));

  std::vector<RelativeRecord> records;
  records.reserve(scenario.n);
  SimTruth truth;
  truth.c_max = c_max;
  int proband_male = 0;
  for (std::size_t i = 0; i < scenario.n; ++i) {
    const std::size_t family = i / block;
    if (i % block == 0) proband_male = bernoulli(rng, scenario.z_prob);
    const int male = bernoulli(rng, scenario.w_prob);
    const double p = draw_group(rng, scenario);
    const int x = bernoulli(rng, p);
    const double t = draw_event_time(rng, scenario, scenario.linear_predictor(x, male, proband_male));
    const double c = open_uniform(rng) * c_max;

    RelativeRecord r;
    r.family_id = "F" + std::to_string(family + 1);
    r.relative_id = std::to_string(i % block + 1);
    r.y = std::min(t, c);
    r.delta = t <= c ? 1 : 0;
    r.config_probs = {p};
    r.w = {static_cast<double>(male)};
    r.z = {static_cast<double>(proband_male)};
    records.push_back(std::move(r));
    truth.carrier.push_back(x);
    truth.event_time.push_back(t);
  }
  return {Dataset(std::move(records), {"male"}, {"proband_male"}), std::move(truth)};
}

double censoring_fraction(const SimScenario& scenario, double c_max, std::size_t mc_n, std::uint64_t seed) {
  scenario.validate();
  if (!(c_max > 0.0)) throw ValidationError("c_max must be positive");
  return sample_times(scenario, mc_n, seed).censored_fraction(c_max);
}

double calibrate_censoring(const SimScenario& scenario, double target, std::size_t mc_n) {
  scenario.validate();
  if (!(target > 0.0 && target < 1.0)) throw ValidationError("censoring target must lie in (0, 1)");
  // The fraction approaches 1 only as c_max shrinks below every sampled time;
  // targets closer to 1 than the sample can resolve are treated as unreachable.
  if (1.0 - target < 1.0 / static_cast<double>(mc_n)) {
    throw ValidationError("censoring target " + format_double(target) + " is unreachable at Monte Carlo resolution");
  }
  const TimeSample sample = sample_times(scenario, mc_n, kCalibrationSeed);
  double hi = scenario.scale;
  int expansions = 0;
  while (sample.censored_fraction(hi) > target) {
    hi *= 2.0;
    if (++expansions > 200) throw ValidationError("censoring target unreachable on the search bracket");
  }
  double lo = hi;
  expansions = 0;
  while (sample.censored_fraction(lo) <= target) {
    lo *= 0.5;
    if (++expansions > 2000 || lo == 0.0) throw ValidationError("censoring target unreachable on the search bracket");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (sample.censored_fraction(mid) > target ? lo : hi) = mid;
  }
  const double c_max = 0.5 * (lo + hi);
  if (std::abs(sample.censored_fraction(c_max) - target) > 0.002) {
    throw ValidationError("censoring calibration failed to reach the target");
  }
  return c_max;
}

bool SimStratum::matches(const RelativeRecord& r) const {
  if (male && (r.w.empty() || static_cast<int>(r.w[0]) != *male)) return false;
  if (proband_male && (r.z.empty() || static_cast<int>(r.z[0]) != *proband_male)) return false;
  return true;
}

std::vector<double> true_risk(const SimScenario& scenario, int carrier, const SimStratum& stratum,
                              std::span<const double> ages) {
  scenario.validate();
  if (carrier != 0 && carrier != 1) throw ValidationError("carrier must be 0 or 1");
  std::vector<double> out(ages.size(), 0.0);
  double total = 0.0;
  for (int w = 0; w < 2; ++w) {
    if (stratum.male && *stratum.male != w) continue;
    for (int z = 0; z < 2; ++z) {
      if (stratum.proband_male && *stratum.proband_male != z) continue;
      const double pw = w == 1 ? scenario.w_prob : 1.0 - scenario.w_prob;
      const double pz = z == 1 ? scenario.z_prob : 1.0 - scenario.z_prob;
      const double weight = pw * pz;
      if (weight == 0.0) continue;
      const double mult = std::exp(scenario.linear_predictor(carrier, w, z));
      for (std::size_t a = 0; a < ages.size(); ++a) {
        if (!(ages[a] >= 0.0)) throw ValidationError("ages must be non-negative");
        out[a] += weight * -std::expm1(-std::pow(ages[a] / scenario.scale, scenario.shape) * mult);
      }
      total += weight;
    }
  }
  if (!(total > 0.0)) throw ValidationError("stratum has zero probability under the scenario");
  for (auto& v : out) v /= total;
  return out;
}

const ReplicationRow& ReplicationReport::row(const std::string& quantity) const {
  for (const auto& r : rows) {
    if (r.quantity == quantity) return r;
  }
  throw ValidationError("report has no quantity '" + quantity + "'");
}

namespace {

struct Quantity {
  std::string name;
  double truth = 0.0;
};

struct ReplicateOutcome {
  bool ok = false;
  double censoring = 0.0;
  std::vector<double> estimate;
  std::vector<double> se;
  std::vector<int> covered;
};

const std::vector<Contrast>& hr_contrasts() {
  static const std::vector<Contrast> contrasts{
      {"HR beta+theta", {{"beta", 1.0}, {"theta_male", 1.0}}},
      {"HR beta", {{"beta", 1.0}}},
      {"HR eta+theta", {{"eta_male", 1.0}, {"theta_male", 1.0}}},
      {"HR eta", {{"eta_male", 1.0}}},
      {"HR theta", {{"theta_male", 1.0}}},
      {"HR gamma", {{"gamma_proband_male", 1.0}}},
  };
  return contrasts;
}

std::string risk_name(int carrier, const SimStratum& s, double age) {
  return std::string(carrier == 1 ? "F1 " : "F0 ") + s.label + " " + format_double(age);
}

}  // namespace

ReplicationReport replicate(const SimScenario& scenario, const ReplicationOptions& opts) {
  scenario.validate();
  if (opts.reps < 1) throw ValidationError("replication needs reps >= 1");
  if (opts.boot_B < 0) throw ValidationError("bootstrap count must be >= 0");
  opts.cfg.validate();

  SimScenario sc = scenario;
  if (!sc.c_max) sc.c_max = calibrate_censoring(sc, sc.censor_target);

  std::vector<Quantity> quantities;
  const std::vector<double> log_truth{sc.beta + sc.theta, sc.beta, sc.eta + sc.theta, sc.eta, sc.theta, sc.gamma};
  for (std::size_t k = 0; k < hr_contrasts().size(); ++k) {
    quantities.push_back({hr_contrasts()[k].label, std::exp(log_truth[k])});
  }
  for (const auto& stratum : opts.strata) {
    for (int carrier : {1, 0}) {
      const auto truth = true_risk(sc, carrier, stratum, opts.ages);
      for (std::size_t a = 0; a < opts.ages.size(); ++a) {
        quantities.push_back({risk_name(carrier, stratum, opts.ages[a]), truth[a]});
      }
    }
  }

  std::vector<ReplicateOutcome> outcomes(static_cast<std::size_t>(opts.reps));
  auto run = [&](std::size_t r) {
    ReplicateOutcome out;
    try {
      const SimData sim = gen_dataset(sc, r);
      const Dataset& data = sim.data;
      out.censoring = 1.0 - static_cast<double>(data.event_count()) / static_cast<double>(data.size());
      const ModelSpec spec = make_spec(data, SplineBasis::constant(), true);
      const FitResult f = fit(data, spec, opts.cfg);
      if (!f.converged) {
        outcomes[r] = out;
        return;
      }
      const auto names = f.param_names();
      const auto coefs = f.coefficients();
      for (const auto& c : hr_contrasts()) out.estimate.push_back(std::exp(c.apply(names, coefs)));

      std::vector<CurveRequest> requests;
      for (const auto& stratum : opts.strata) {
        for (int carrier : {1, 0}) {
          requests.push_back({risk_name(carrier, stratum, 0.0), carrier,
                              [stratum](const RelativeRecord& rec) { return stratum.matches(rec); }, true});
        }
      }
      for (const auto& req : requests) {
        const auto curve = stratified_marginal(f, data, req.carrier, req.stratum, opts.ages, true);
        out.estimate.insert(out.estimate.end(), curve.risk.begin(), curve.risk.end());
      }

      if (opts.boot_B > 0) {
        BootstrapOptions bo;
        bo.B = opts.boot_B;
        bo.seed = sc.seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(r) + 1));
        bo.ages = opts.ages;
        bo.curves = requests;
        bo.warm_start = opts.warm_start;
        const BootstrapResult boot = multiplier_bootstrap(data, spec, opts.cfg, bo, &f);
        std::size_t q = 0;
        for (const auto& c : hr_contrasts()) {
          std::vector<double> reps;
          for (const auto& row : boot.coef_reps) reps.push_back(std::exp(c.apply(names, row)));
          const auto s = summarize(reps);
          out.se.push_back(s.sd);
          out.covered.push_back(s.lower <= quantities[q].truth && quantities[q].truth <= s.upper);
          ++q;
        }
        for (std::size_t c = 0; c < boot.curves.size(); ++c) {
          for (std::size_t a = 0; a < opts.ages.size(); ++a) {
            out.se.push_back(boot.curve_se[c][a]);
            const double truth = quantities[q].truth;
            out.covered.push_back((*boot.curves[c].lower)[a] <= truth && truth <= (*boot.curves[c].upper)[a]);
            ++q;
          }
        }
      }
      out.ok = true;
    } catch (const Error&) {
      out.ok = false;
    }
    outcomes[r] = std::move(out);
  };
  detail::parallel_for(outcomes.size(), opts.threads, run);

  ReplicationReport report;
  report.scenario = sc;
  report.c_max = *sc.c_max;
  report.reps = opts.reps;
  report.boot_B = opts.boot_B;
  std::vector<const ReplicateOutcome*> good;
  double censoring = 0.0;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++report.failures;
      continue;
    }
    good.push_back(&o);
    censoring += o.censoring;
  }
  if (good.empty()) throw NumericalError("every simulation replicate failed");
  report.mean_censoring = censoring / static_cast<double>(good.size());

  for (std::size_t q = 0; q < quantities.size(); ++q) {
    ReplicationRow row;
    row.quantity = quantities[q].name;
    row.truth = quantities[q].truth;
    row.n = good.size();
    std::vector<double> est;
    for (const auto* o : good) est.push_back(o->estimate[q]);
    row.mean = mean(est);
    row.bias = row.mean - row.truth;
    if (est.size() > 1) {
      row.sd = sample_sd(est);
      row.mc_se = *row.sd / std::sqrt(static_cast<double>(est.size()));
    }
    if (opts.boot_B > 0) {
      double se = 0.0;
      double cover = 0.0;
      for (const auto* o : good) {
        se += o->se[q];
        cover += o->covered[q];
      }
      row.mean_se = se / static_cast<double>(good.size());
      row.cp = cover / static_cast<double>(good.size());
    }
    report.rows.push_back(row);
  }
  return report;
}

void write_report(std::ostream& out, const ReplicationReport& report) {
  const auto& s = report.scenario;
  out << "# n=" << s.n << " shape=" << format_double(s.shape) << " scale=" << format_double(s.scale)
      << " censor_target=" << format_double(s.censor_target) << " c_max=" << format_double(report.c_max)
      << " mean_censoring=" << format_double(report.mean_censoring) << '\n';
  out << "# seed=" << s.seed << " reps=" << report.reps << " boot_B=" << report.boot_B
      << " failures=" << report.failures << '\n';
  auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string("NA"); };
  out << "quantity,true,mean,bias,sd,se,cp,mc_se,n\n";
  for (const auto& r : report.rows) {
    out << r.quantity << ',' << format_double(r.truth) << ',' << format_double(r.mean) << ','
        << format_double(r.bias) << ',' << opt(r.sd) << ',' << opt(r.mean_se) << ',' << opt(r.cp) << ','
        << format_double(r.mc_se) << ',' << r.n << '\n';
  }
}

}  // namespace kinrisk
