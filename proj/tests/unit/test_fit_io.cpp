#include <filesystem>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "kinrisk/errors.hpp"
#include "kinrisk/fit_io.hpp"
#include "test_util.hpp"

using namespace kinrisk;

namespace {

void expect_same(const FitResult& a, const FitResult& b) {
  EXPECT_EQ(a.param_names(), b.param_names());
  EXPECT_EQ(a.coefficients(), b.coefficients());
  EXPECT_EQ(a.spec.basis, b.spec.basis);
  EXPECT_EQ(a.spec.second_gene, b.spec.second_gene);
  EXPECT_EQ(a.spec.interaction, b.spec.interaction);
  EXPECT_EQ(a.params.baseline.times, b.params.baseline.times);
  EXPECT_EQ(a.params.baseline.jumps, b.params.baseline.jumps);
  EXPECT_EQ(a.posteriors, b.posteriors);
  EXPECT_EQ(a.loglik, b.loglik);
  EXPECT_EQ(a.loglik_trace, b.loglik_trace);
  EXPECT_EQ(a.iters, b.iters);
  EXPECT_EQ(a.converged, b.converged);
}

}  // namespace

TEST(FitIo, SplineFitRoundTrip) {
  std::mt19937_64 rng(1);
  const auto d = testutil::random_mixture(rng, 120, true);
  const auto f = fit(d, make_spec(d, place_knots(std::vector<double>{10, 20, 30, 40}, 1, 2), true));
  std::stringstream io;
  write_fit(io, f);
  const std::string text = io.str();
  const auto back = read_fit(io);
  expect_same(f, back);
  std::ostringstream again;
  write_fit(again, back);
  EXPECT_EQ(again.str(), text);
}

TEST(FitIo, TwoGeneRoundTripThroughFile) {
  std::mt19937_64 rng(2);
  const auto base = testutil::random_mixture(rng, 80, false);
  std::vector<RelativeRecord> recs = base.records();
  for (auto& r : recs) {
    const double p = r.config_probs[0];
    r.config_probs = {(1 - p) * 0.7, (1 - p) * 0.3, p * 0.7, p * 0.3};
  }
  const Dataset d(recs, base.w_names(), base.z_names());
  const auto f = fit_multigene(d, make_spec(d, SplineBasis::constant(), false, SplineBasis::constant()));
  const auto path = std::filesystem::temp_directory_path() / "kinrisk_fit_io_test.json";
  write_fit(path, f);
  expect_same(f, read_fit(path));
  std::filesystem::remove(path);
}

TEST(FitIo, Errors) {
  std::istringstream not_json("{ nope");
  EXPECT_THROW(read_fit(not_json), ValidationError);
  std::istringstream wrong_format(R"({"format": "other"})");
  EXPECT_THROW(read_fit(wrong_format), ValidationError);
  std::istringstream missing(R"({"format": "kinrisk-fit-1"})");
  EXPECT_THROW(read_fit(missing), ValidationError);
  EXPECT_THROW(read_fit(std::filesystem::path("/nonexistent/fit.json")), IoError);
}
