#include "kinrisk/trial_design.hpp"

#include <cmath>
#include <ostream>

#include "kinrisk/errors.hpp"
#include "kinrisk/stats.hpp"

namespace kinrisk {

double window_risk(const RiskCurve& curve, double t, double horizon) {
  if (!(horizon > 0.0)) throw ValidationError("horizon must be positive");
  if (curve.ages.empty() || t < curve.ages.front() || t + horizon > curve.ages.back()) {
    throw ValidationError("curve '" + curve.label + "' does not cover the window [" + format_double(t) + ", " +
                          format_double(t + horizon) + "]");
  }
  const double f0 = curve.at(t);
  const double f1 = curve.at(t + horizon);
  if (f0 >= 1.0) throw ValidationError("no one is at risk at age " + format_double(t));
  return std::max(0.0, (f1 - f0) / (1.0 - f0));
}

long sample_size(double p0, double p1, double alpha, double power) {
  for (double p : {p0, p1}) {
    if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("event probabilities must lie in [0, 1]");
  }
  if (!(alpha > 0.0 && alpha < 1.0) || !(power > 0.0 && power < 1.0)) {
    throw ValidationError("alpha and power must lie in (0, 1)");
  }
  if (p0 == p1) throw ValidationError("sample size is undefined when p0 equals p1");
  const double za = normal_quantile(1.0 - alpha / 2.0);
  const double zb = normal_quantile(power);
  const double pbar = 0.5 * (p0 + p1);
  const double root = za * std::sqrt(2.0 * pbar * (1.0 - pbar)) + zb * std::sqrt(p0 * (1.0 - p0) + p1 * (1.0 - p1));
  const double diff = p0 - p1;
  return static_cast<long>(std::ceil(root * root / (diff * diff)));
}

std::vector<TrialDesign> design_table(const RiskCurve& carrier, const RiskCurve& noncarrier,
                                      std::span<const double> ages, double horizon, double alpha, double power,
                                      std::optional<int> round_digits) {
  if (ages.empty()) throw ValidationError("design table needs at least one age");
  auto round = [&round_digits](double v) {
    if (!round_digits) return v;
    const double scale = std::pow(10.0, *round_digits);
    return std::round(v * scale) / scale;
  };
  std::vector<TrialDesign> rows;
  for (double age : ages) {
    TrialDesign d;
    d.age = age;
    d.horizon = horizon;
    d.alpha = alpha;
    d.power = power;
    d.p0 = round(window_risk(carrier, age, horizon));
    d.p1 = round(window_risk(noncarrier, age, horizon));
    d.p1_half = d.p0 + (d.p1 - d.p0) / 2.0;
    d.n_full = sample_size(d.p0, d.p1, alpha, power);
    d.n_half = sample_size(d.p0, d.p1_half, alpha, power);
    rows.push_back(d);
  }
  return rows;
}

void write_design_table(std::ostream& out, const std::vector<TrialDesign>& rows) {
  out << "age,p0,p1,diff,n_per_arm,p1_half,diff_half,n_per_arm_half\n";
  for (const auto& d : rows) {
    out << format_double(d.age) << ',' << format_double(d.p0) << ',' << format_double(d.p1) << ','
        << format_double(d.p0 - d.p1) << ',' << d.n_full << ',' << format_double(d.p1_half) << ','
        << format_double(d.p0 - d.p1_half) << ',' << d.n_half << '\n';
  }
}

}  // namespace kinrisk
