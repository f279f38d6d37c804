#include <algorithm>
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "kinrisk/errors.hpp"
#include "kinrisk/simulate.hpp"
#include "kinrisk/stats.hpp"

using namespace kinrisk;

namespace {

SimScenario null_scenario() {
  SimScenario s;
  s.beta = s.eta = s.theta = s.gamma = 0.0;
  return s;
}

}  // namespace

TEST(SimScenario, DefaultHazardRatios) {
  const SimScenario s;
  EXPECT_NEAR(std::exp(s.beta), 4.99, 1e-14);
  EXPECT_NEAR(std::exp(s.theta), 0.31, 1e-14);
  EXPECT_NEAR(std::exp(s.eta), 2.39, 1e-14);
  EXPECT_NEAR(std::exp(s.gamma), 0.71, 1e-14);
  EXPECT_EQ(std::round(std::exp(s.beta + s.theta) * 1000) / 1000, 1.547);
  EXPECT_DOUBLE_EQ(s.linear_predictor(1, 1, 1), s.beta + s.eta + s.theta + s.gamma);
  EXPECT_DOUBLE_EQ(s.linear_predictor(0, 1, 0), s.eta);
}

TEST(SimScenario, Validation) {
  SimScenario s;
  s.prob_freqs = {0.5, 0.5, 0.1, 0.0};
  EXPECT_THROW(s.validate(), ValidationError);
  s = SimScenario{};
  s.censor_target = 1.0;
  EXPECT_THROW(s.validate(), ValidationError);
  s = SimScenario{};
  s.n = 0;
  EXPECT_THROW(s.validate(), ValidationError);
}

TEST(GenDataset, NullPredictorMedian) {
  auto s = null_scenario();
  s.n = 200000;
  s.c_max = 1e9;
  const auto sim = gen_dataset(s);
  std::vector<double> t = sim.truth.event_time;
  std::nth_element(t.begin(), t.begin() + static_cast<long>(t.size() / 2), t.end());
  const double analytic = 105.0 * std::pow(std::log(2.0), 0.2);
  EXPECT_NEAR(analytic, 97.58, 0.005);
  // SE of the sample median is about 0.05 here.
  EXPECT_NEAR(t[t.size() / 2], analytic, 0.25);
}

TEST(GenDataset, ObservationInvariants) {
  SimScenario s;
  s.n = 50000;
  const auto sim = gen_dataset(s);
  const auto& d = sim.data;
  ASSERT_EQ(d.size(), s.n);
  std::size_t ungenotyped = 0;
  std::size_t mid = 0;
  std::size_t mid_carriers = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& r = d[i];
    EXPECT_LE(r.y, sim.truth.event_time[i]);
    EXPECT_EQ(r.y == sim.truth.event_time[i], r.delta == 1);
    EXPECT_GT(r.y, 0.0);
    const double p = r.config_probs[0];
    if (p != 0.0 && p != 1.0) ++ungenotyped;
    if (p == 0.51) {
      ++mid;
      mid_carriers += static_cast<std::size_t>(sim.truth.carrier[i]);
    }
    if (p == 0.0) EXPECT_EQ(sim.truth.carrier[i], 0);
    if (p == 1.0) EXPECT_EQ(sim.truth.carrier[i], 1);
  }
  EXPECT_NEAR(static_cast<double>(ungenotyped) / d.size(), 0.93, 0.01);
  const double rate = static_cast<double>(mid_carriers) / mid;
  EXPECT_NEAR(rate, 0.51, 3.0 * std::sqrt(0.51 * 0.49 / mid));
  EXPECT_EQ(d.w_names(), std::vector<std::string>{"male"});
  EXPECT_EQ(d.z_names(), std::vector<std::string>{"proband_male"});
}

TEST(GenDataset, FamiliesAreConsecutiveBlocksSharingZ) {
  SimScenario s;
  s.n = 100;
  s.family_size = 4.2;
  s.c_max = 150.0;
  const auto d = gen_dataset(s).data;
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(d[i].family_id, "F" + std::to_string(i / 5 + 1));
    if (i % 5 != 0) EXPECT_EQ(d[i].z, d[i - 1].z);
  }
  EXPECT_EQ(d.families().size(), 20u);
}

TEST(GenDataset, Deterministic) {
  SimScenario s;
  s.n = 500;
  s.c_max = 150.0;
  const auto a = gen_dataset(s, 3);
  const auto b = gen_dataset(s, 3);
  EXPECT_EQ(a.data, b.data);
  EXPECT_EQ(a.truth.event_time, b.truth.event_time);
  EXPECT_NE(gen_dataset(s, 4).data, a.data);
}

TEST(Censoring, MonotoneInCmax) {
  const SimScenario s;
  double previous = 1.0;
  for (double c : {60.0, 100.0, 150.0, 200.0, 300.0, 600.0}) {
    const double f = censoring_fraction(s, c, 200000);
    EXPECT_LT(f, previous);
    previous = f;
  }
}

TEST(Censoring, CalibratedTargetIsRealized) {
  SimScenario s;
  const double c_max = calibrate_censoring(s, 0.40);
  EXPECT_NEAR(censoring_fraction(s, c_max), 0.40, 0.002);
  s.c_max = c_max;
  s.n = 1000000;
  s.seed = 12345;
  const auto sim = gen_dataset(s);
  std::size_t censored = 0;
  for (const auto& r : sim.data.records()) censored += r.delta == 0 ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(censored) / 1e6, 0.40, 0.01);
  EXPECT_EQ(sim.truth.c_max, c_max);
}

TEST(Censoring, CalibrationIsUsedWhenCmaxIsAbsent) {
  SimScenario s;
  s.n = 10;
  s.censor_target = 0.6;
  EXPECT_EQ(gen_dataset(s).truth.c_max, calibrate_censoring(s, 0.6));
}

TEST(Censoring, UnreachableTarget) {
  const SimScenario s;
  EXPECT_THROW(calibrate_censoring(s, 1.0 - 1e-9), ValidationError);
  EXPECT_THROW(calibrate_censoring(s, 0.0), ValidationError);
}

TEST(TrueRisk, SimpleValues) {
  const auto s = null_scenario();
  const SimStratum all;
  const std::vector<double> ages{0.0, 105.0};
  for (int carrier : {0, 1}) {
    const auto f = true_risk(s, carrier, all, ages);
    EXPECT_EQ(f[0], 0.0);
    EXPECT_NEAR(f[1], 1.0 - std::exp(-1.0), 1e-15);
    EXPECT_NEAR(f[1], 0.6321, 5e-5);
  }
}

TEST(TrueRisk, HandEnumeration) {
  const SimScenario s;
  const std::vector<double> ages{70.0};
  const double h = std::pow(70.0 / 105.0, 5.0);
  // Male carriers, proband sex marginalized over Bernoulli(0.5).
  const double male = 0.5 * (1.0 - std::exp(-h * 4.99 * 2.39 * 0.31)) + 0.5 * (1.0 - std::exp(-h * 4.99 * 2.39 * 0.31 * 0.71));
  EXPECT_NEAR(true_risk(s, 1, SimStratum{"male", 1, std::nullopt}, ages)[0], male, 1e-14);
  const double female0 = 1.0 - std::exp(-h);
  EXPECT_NEAR(true_risk(s, 0, SimStratum{"f", 0, 0}, ages)[0], female0, 1e-15);
}

TEST(TrueRisk, MatchesMonteCarlo) {
  const SimScenario s;
  const std::vector<double> ages{60.0, 75.0};
  const std::size_t n = 1000000;
  auto rng = make_stream(2024, 0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int carrier : {0, 1}) {
    const auto exact = true_risk(s, carrier, SimStratum{}, ages);
    std::vector<double> hits(ages.size(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double w = u(rng) < s.w_prob ? 1.0 : 0.0;
      const double z = u(rng) < s.z_prob ? 1.0 : 0.0;
      const double e = -std::log(1.0 - u(rng));
      const double t = s.scale * std::pow(e / std::exp(s.linear_predictor(carrier, w, z)), 1.0 / s.shape);
      for (std::size_t k = 0; k < ages.size(); ++k) hits[k] += t <= ages[k] ? 1.0 : 0.0;
    }
    for (std::size_t k = 0; k < ages.size(); ++k) {
      const double p = hits[k] / n;
      EXPECT_NEAR(p, exact[k], 3.0 * std::sqrt(exact[k] * (1 - exact[k]) / n)) << carrier << " " << ages[k];
    }
  }
}

TEST(Replicate, SingleReplicateHasNoSpread) {
  SimScenario s;
  s.n = 400;
  s.c_max = 160.0;
  ReplicationOptions o;
  o.reps = 1;
  o.boot_B = 0;
  const auto rep = replicate(s, o);
  const auto& row = rep.row("HR beta");
  EXPECT_FALSE(row.sd);
  EXPECT_FALSE(row.mean_se);
  EXPECT_FALSE(row.cp);
  EXPECT_EQ(row.n, 1u);
  EXPECT_DOUBLE_EQ(row.truth, 4.99);
  EXPECT_DOUBLE_EQ(row.bias, row.mean - row.truth);
  EXPECT_EQ(row.mc_se, 0.0);
  EXPECT_EQ(rep.rows.size(), 6u + 2u * 3u * 5u);
  EXPECT_THROW(rep.row("HR delta"), ValidationError);
}

TEST(Replicate, ReportsAreDeterministic) {
  SimScenario s;
  s.n = 300;
  s.c_max = 160.0;
  s.seed = 7;
  ReplicationOptions o;
  o.reps = 2;
  o.boot_B = 5;
  o.ages = {60.0, 70.0};
  std::ostringstream a;
  std::ostringstream b;
  write_report(a, replicate(s, o));
  o.threads = 2;
  write_report(b, replicate(s, o));
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(a.str().rfind("# n=300 ", 0), 0u);
  EXPECT_NE(a.str().find("\nquantity,true,mean,bias,sd,se,cp,mc_se,n\n"), std::string::npos);
}

TEST(Replicate, CoverageAndSpreadAreWellFormed) {
  SimScenario s;
  s.n = 500;
  s.c_max = 160.0;
  ReplicationOptions o;
  o.reps = 3;
  o.boot_B = 10;
  const auto rep = replicate(s, o);
  for (const auto& row : rep.rows) {
    ASSERT_TRUE(row.sd && row.cp && row.mean_se) << row.quantity;
    EXPECT_GE(*row.sd, 0.0);
    EXPECT_GE(*row.cp, 0.0);
    EXPECT_LE(*row.cp, 1.0);
  }
  EXPECT_GT(rep.mean_censoring, 0.0);
}
