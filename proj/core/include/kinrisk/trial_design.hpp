#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "kinrisk/risk.hpp"

namespace kinrisk {

// (F(t + h) - F(t)) / (1 - F(t)): onset within `horizon` years given event-free at t.
double window_risk(const RiskCurve& curve, double t, double horizon = 5.0);

// Per-arm size for a two-sided two-proportion z-test, pooled variance under
// the null and unpooled under the alternative.
long sample_size(double p0, double p1, double alpha = 0.05, double power = 0.80);

struct TrialDesign {
  double age = 0.0;
  double horizon = 5.0;
  double p0 = 0.0;       // carrier (placebo arm) window risk
  double p1 = 0.0;       // non-carrier window risk: full prevention
  double p1_half = 0.0;  // p0 + (p1 - p0) / 2: half the excess risk removed
  double alpha = 0.05;
  double power = 0.80;
  long n_full = 0;
  long n_half = 0;
};

// One design per baseline age. With `round_digits`, p0 and p1 are rounded to
// that many decimals before the sample sizes are computed (p1_half is derived
// from the rounded values).
std::vector<TrialDesign> design_table(const RiskCurve& carrier, const RiskCurve& noncarrier,
                                      std::span<const double> ages, double horizon = 5.0,
                                      double alpha = 0.05, double power = 0.80,
                                      std::optional<int> round_digits = std::nullopt);

// Columns: age, p0, p1, diff, n_per_arm, p1_half, diff_half, n_per_arm_half.
void write_design_table(std::ostream& out, const std::vector<TrialDesign>& rows);

}  // namespace kinrisk
