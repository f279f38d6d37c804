#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kinrisk/data_model.hpp"
#include "kinrisk/em_engine.hpp"

namespace kinrisk {

// Kin-cohort simulation design: Weibull baseline, hazard
//   lambda0(t) exp{beta X + eta W + theta W X + gamma Z},
// W = relative is male ~ Bernoulli(w_prob), Z = proband is male ~ Bernoulli(z_prob)
// shared by the family, carrier probability drawn from a finite set of groups
// and uniform censoring on (0, c_max).
struct SimScenario {
  std::size_t n = 2266;
  double shape = 5.0;
  double scale = 105.0;
  double beta = std::log(4.99);
  double eta = std::log(2.39);
  double theta = std::log(0.31);
  double gamma = std::log(0.71);
  std::vector<double> prob_values{0.0, 0.02, 0.51, 1.0};
  std::vector<double> prob_freqs{0.03, 0.71, 0.22, 0.04};
  double w_prob = 0.5;
  double z_prob = 0.5;
  double censor_target = 0.40;
  std::optional<double> c_max;  // calibrated from censor_target when absent
  double family_size = 2266.0 / 474.0;
  std::uint64_t seed = 1;

  void validate() const;
  double linear_predictor(int x, double w, double z) const;
};

struct SimTruth {
  std::vector<int> carrier;
  std::vector<double> event_time;
  double c_max = 0.0;
};

struct SimData {
  Dataset data;
  SimTruth truth;
};

// Dataset drawn from stream (scenario.seed, stream).
SimData gen_dataset(const SimScenario& scenario, std::uint64_t stream = 0);

// Monte Carlo censoring fraction P(T > C) for C ~ U(0, c_max), averaging
// P(T > C | T) = min(T / c_max, 1) over mc_n draws of T.
double censoring_fraction(const SimScenario& scenario, double c_max, std::size_t mc_n = 1'000'000,
                          std::uint64_t seed = 0x6b696e7269736bULL);

// c_max reaching `target` by bisection on censoring_fraction with a fixed seed.
double calibrate_censoring(const SimScenario& scenario, double target, std::size_t mc_n = 1'000'000);

// Subgroup for risk summaries; unset fields are marginalized.
struct SimStratum {
  std::string label = "all";
  std::optional<int> male;
  std::optional<int> proband_male;

  bool matches(const RelativeRecord& r) const;
};

// E[1 - exp{-(t/scale)^shape e^{linpred}} | X = carrier, stratum], by exact
// enumeration over the binary covariates.
std::vector<double> true_risk(const SimScenario& scenario, int carrier, const SimStratum& stratum,
                              std::span<const double> ages);

struct ReplicationOptions {
  int reps = 100;
  int boot_B = 200;  // 0 skips the bootstrap; SE and CP are then absent
  std::vector<double> ages{60, 65, 70, 75, 80};
  std::vector<SimStratum> strata{{"all", std::nullopt, std::nullopt}, {"male", 1, std::nullopt}, {"female", 0, std::nullopt}};
  EmConfig cfg;
  int threads = 1;
  bool warm_start = true;  // bootstrap refits start from the replicate's point fit
};

struct ReplicationRow {
  std::string quantity;
  double truth = 0.0;
  double mean = 0.0;
  double bias = 0.0;
  double mc_se = 0.0;  // SD / sqrt(replicates); 0 with one replicate
  std::optional<double> sd;
  std::optional<double> mean_se;
  std::optional<double> cp;
  std::size_t n = 0;
};

struct ReplicationReport {
  SimScenario scenario;
  double c_max = 0.0;
  int reps = 0;
  int boot_B = 0;
  int failures = 0;
  double mean_censoring = 0.0;
  std::vector<ReplicationRow> rows;

  const ReplicationRow& row(const std::string& quantity) const;
};

// Hazard ratio rows (beta+theta, beta, eta+theta, eta, theta, gamma on the HR
// scale) followed by F1 and F0 for every stratum and age.
ReplicationReport replicate(const SimScenario& scenario, const ReplicationOptions& opts);

void write_report(std::ostream& out, const ReplicationReport& report);

}  // namespace kinrisk
