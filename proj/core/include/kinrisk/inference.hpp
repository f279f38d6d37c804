#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "kinrisk/data_model.hpp"
#include "kinrisk/em_engine.hpp"
#include "kinrisk/risk.hpp"

namespace kinrisk {

// Linear combination of named coefficients, e.g. beta + theta_male.
struct Contrast {
  std::string label;
  std::vector<std::pair<std::string, double>> terms;

  double apply(std::span<const std::string> names, std::span<const double> values) const;
};

// Parses "[label=]term (+|-) term ...", where a term is [coef*]name.
Contrast parse_contrast(std::string_view text);

// Every coefficient on its own; beta + theta_w for each interaction when beta
// is constant; pairwise differences of gamma coefficients.
std::vector<Contrast> default_contrasts(const FitResult& fit);

// Risk curve tracked through the bootstrap.
struct CurveRequest {
  std::string label;
  int carrier = 1;
  std::function<bool(const RelativeRecord&)> stratum;  // empty: all records
  bool independence = true;
};

enum class MultiplierDist { exponential, unit };

struct BootstrapOptions {
  int B = 200;
  std::uint64_t seed = 0;
  std::vector<double> ages;
  std::vector<CurveRequest> curves;
  MultiplierDist dist = MultiplierDist::exponential;
  int threads = 1;
  // Start each replicate from the point estimate instead of zero.
  bool warm_start = false;
};

struct BootstrapResult {
  int B = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> names;
  std::vector<double> point;                    // coefficient estimates of the full-data fit
  std::vector<std::vector<double>> coef_reps;   // one row per retained replicate
  std::vector<double> se;                       // sample SD over replicates
  std::vector<double> lower;                    // 2.5% percentile
  std::vector<double> upper;                    // 97.5% percentile
  std::vector<double> ages;
  std::vector<RiskCurve> curves;                // point curves with percentile bands
  std::vector<std::vector<double>> curve_se;    // [curve][age]
  std::vector<std::vector<std::vector<double>>> curve_reps;  // [replicate][curve][age]
  std::vector<int> dropped;                     // indices of failed or non-converged replicates
  std::optional<std::string> warning;
};

// Family-level multiplier bootstrap. Each replicate draws one weight per
// family from stream (seed, replicate), multiplies it into the record
// weights and refits. `point` may supply an existing fit of the same model.
BootstrapResult multiplier_bootstrap(const Dataset& data, const ModelSpec& spec, const EmConfig& cfg,
                                     const BootstrapOptions& opts, const FitResult* point = nullptr);

// Percentile summary of replicated values: {sd, 2.5%, 97.5%}.
struct Summary {
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};
Summary summarize(std::vector<double> values);

struct HrRow {
  std::string label;
  double estimate = 0.0;  // log scale
  double se = 0.0;        // bootstrap SE of the log-HR
  double hr = 1.0;
  double lower = 1.0;
  double upper = 1.0;
  double p_value = 1.0;
};

// HR = exp(contrast . estimate); interval from percentiles of exp(contrast . replicates);
// two-sided normal p-value on the log scale with the bootstrap SE.
std::vector<HrRow> hr_table(const FitResult& fit, const BootstrapResult& boot,
                            const std::vector<Contrast>& contrasts);

struct BicRow {
  std::string model;
  int degree = 0;   // 0 with knots = 0 and constant = true is the time-invariant model
  int knots = 0;
  bool constant = false;
  std::size_t k = 0;
  double loglik = 0.0;
  double bic = 0.0;
  bool ok = false;
  std::string error;
};

struct BicScan {
  std::vector<BicRow> rows;
  std::optional<std::size_t> selected;
};

// BIC = -2 loglik + k log(n), k = Euclidean parameter count, n = records.
double bic_value(double loglik, std::size_t k, std::size_t n);

// Index of the successful row with the smallest BIC (first on ties).
std::optional<std::size_t> select_min_bic(const std::vector<BicRow>& rows);

// Fits the constant-beta model plus every (degree, knots) spline model.
// Failed or non-converged fits are flagged and excluded from the selection.
BicScan bic_scan(const Dataset& data, const EmConfig& cfg, std::span<const int> degrees,
                 std::span<const int> knot_counts, bool interaction, bool include_constant = true);

void write_hr_table(std::ostream& out, const std::vector<HrRow>& rows, const BootstrapResult& boot);
void write_bootstrap(std::ostream& out, const BootstrapResult& boot);
void write_bic_scan(std::ostream& out, const BicScan& scan);

}  // namespace kinrisk
