#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "kinrisk/errors.hpp"
#include "kinrisk/trial_design.hpp"

using namespace kinrisk;

namespace {

// Published marginal penetrance values at ages 60-80.
RiskCurve carrier_curve() {
  return {{60, 65, 70, 75, 80}, {0.0727, 0.1144, 0.1674, 0.2081, 0.2475}, std::nullopt, std::nullopt, "carrier"};
}
RiskCurve noncarrier_curve() {
  return {{60, 65, 70, 75, 80}, {0.0301, 0.0480, 0.0715, 0.0901, 0.1087}, std::nullopt, std::nullopt, "noncarrier"};
}

double round3(double x) { return std::round(x * 1000.0) / 1000.0; }

}  // namespace

TEST(WindowRisk, PublishedExamples) {
  EXPECT_NEAR(window_risk(carrier_curve(), 65.0), (0.1674 - 0.1144) / (1 - 0.1144), 1e-15);
  EXPECT_EQ(round3(window_risk(carrier_curve(), 65.0)), 0.060);
  EXPECT_NEAR(window_risk(noncarrier_curve(), 60.0), 0.01846, 5e-6);
  EXPECT_EQ(round3(window_risk(noncarrier_curve(), 60.0)), 0.018);
}

TEST(WindowRisk, FlatCurveAndErrors) {
  const RiskCurve flat{{60, 65}, {0.2, 0.2}, std::nullopt, std::nullopt, "flat"};
  EXPECT_EQ(window_risk(flat, 60.0), 0.0);
  const RiskCurve full{{60, 65}, {1.0, 1.0}, std::nullopt, std::nullopt, "full"};
  EXPECT_THROW(window_risk(full, 60.0), ValidationError);
  EXPECT_THROW(window_risk(carrier_curve(), 80.0), ValidationError);
  EXPECT_THROW(window_risk(carrier_curve(), 55.0), ValidationError);
}

TEST(SampleSize, PublishedExamples) {
  EXPECT_NEAR(static_cast<double>(sample_size(0.060, 0.025)), 521.0, 2.0);
  EXPECT_NEAR(static_cast<double>(sample_size(0.060, 0.0425)), 2492.0, 2.0);
}

TEST(SampleSize, MatchesClosedForm) {
  // Independent evaluation with the textbook normal quantiles.
  const double za = 1.959963984540054;
  const double zb = 0.8416212335729143;
  for (auto [p0, p1] : {std::pair{0.2, 0.1}, std::pair{0.05, 0.09}, std::pair{0.5, 0.45}}) {
    const double pbar = 0.5 * (p0 + p1);
    const double num = za * std::sqrt(2 * pbar * (1 - pbar)) + zb * std::sqrt(p0 * (1 - p0) + p1 * (1 - p1));
    EXPECT_EQ(sample_size(p0, p1), static_cast<long>(std::ceil(num * num / ((p0 - p1) * (p0 - p1)))));
  }
}

TEST(SampleSize, StructuralProperties) {
  EXPECT_EQ(sample_size(0.06, 0.025), sample_size(0.025, 0.06));
  const double pbar = 0.1;
  long previous = sample_size(pbar + 0.005, pbar - 0.005);
  for (double half = 0.01; half < 0.09; half += 0.005) {
    const long n = sample_size(pbar + half, pbar - half);
    EXPECT_LT(n, previous);
    previous = n;
  }
  const double ratio = static_cast<double>(sample_size(0.1025, 0.0975)) / static_cast<double>(sample_size(0.105, 0.095));
  EXPECT_NEAR(ratio, 4.0, 0.05);
  EXPECT_THROW(sample_size(0.1, 0.1), ValidationError);
  EXPECT_THROW(sample_size(0.1, 0.2, 0.0), ValidationError);
  EXPECT_THROW(sample_size(0.1, 0.2, 0.05, 1.0), ValidationError);
}

TEST(DesignTable, RoundedPublishedInputs) {
  const std::vector<double> ages{60, 65, 70, 75};
  const auto rows = design_table(carrier_curve(), noncarrier_curve(), ages, 5.0, 0.05, 0.8, 3);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].p0, 0.045);
  EXPECT_EQ(rows[0].p1, 0.018);
  EXPECT_EQ(rows[1].p0, 0.060);
  EXPECT_EQ(rows[1].p1, 0.025);
  const long full[] = {657, 521, 622, 589};
  const long half[] = {3169, 2492, 2987, 2839};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_NEAR(static_cast<double>(rows[k].n_full), static_cast<double>(full[k]), 2.0) << ages[k];
    EXPECT_NEAR(static_cast<double>(rows[k].n_half), static_cast<double>(half[k]), 2.0) << ages[k];
    EXPECT_GT(rows[k].n_half, rows[k].n_full);
    EXPECT_DOUBLE_EQ(rows[k].p1_half, rows[k].p0 + (rows[k].p1 - rows[k].p0) / 2);
  }
}

TEST(DesignTable, CsvLayout) {
  const std::vector<double> ages{65};
  std::ostringstream out;
  write_design_table(out, design_table(carrier_curve(), noncarrier_curve(), ages, 5.0, 0.05, 0.8, 3));
  const auto text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "age,p0,p1,diff,n_per_arm,p1_half,diff_half,n_per_arm_half");
  EXPECT_NE(text.find("65,0.06,0.025,"), std::string::npos) << text;
}
