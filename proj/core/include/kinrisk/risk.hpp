#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kinrisk/data_model.hpp"
#include "kinrisk/em_engine.hpp"

namespace kinrisk {

// Cumulative risk F(t) on an age grid. Curves are right-continuous step
// functions: the risk at an age equals the risk at the last jump <= age.
struct RiskCurve {
  std::vector<double> ages;
  std::vector<double> risk;
  std::optional<std::vector<double>> lower;
  std::optional<std::vector<double>> upper;
  std::string label;

  // Risk at an arbitrary age by step interpolation of the grid. Throws if the
  // age lies before the first grid point.
  double at(double age) const;
};

// F(t) = 1 - exp{-A(t)}, A(t) = sum over jumps Y_k <= t of
// dL0(Y_k) exp{carrier beta(Y_k) + second beta2(Y_k)} exp{(eta + carrier theta)'w + gamma'z}.
RiskCurve conditional_risk(const FitResult& fit, int carrier, std::span<const double> w,
                           std::span<const double> z, std::span<const double> ages,
                           int second_carrier = 0);

// Average of conditional survival over the observed covariates. With
// `independence` every record counts by its weight; otherwise records are
// weighted by the posterior probability of the requested carrier status.
RiskCurve marginal_risk(const FitResult& fit, const Dataset& data, int carrier,
                        std::span<const double> ages, bool independence = true);

RiskCurve stratified_marginal(const FitResult& fit, const Dataset& data, int carrier,
                              const std::function<bool(const RelativeRecord&)>& stratum,
                              std::span<const double> ages, bool independence = true);

// Cumulative baseline hazard from an external source, as (age, value) pairs.
struct ExternalBaseline {
  std::vector<double> ages;
  std::vector<double> cumhaz;

  void validate() const;
};

// Conditional risk with the fitted baseline replaced by the increments of
// `external` at its table ages; regression coefficients are kept.
RiskCurve calibrate_external_baseline(const FitResult& fit, const ExternalBaseline& external,
                                      int carrier, std::span<const double> w,
                                      std::span<const double> z, std::span<const double> ages);

// Integer ages lo, lo + step, ..., hi.
std::vector<double> age_grid(double lo, double hi, double step = 1.0);

// CSV with columns age, risk, lower, upper, label. Several curves may share
// one file; they are distinguished by label.
void write_curves(std::ostream& out, const std::vector<RiskCurve>& curves);
std::vector<RiskCurve> read_curves(std::istream& in);
std::vector<RiskCurve> read_curves(const std::filesystem::path& path);

}  // namespace kinrisk
