#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "kinrisk/data_model.hpp"
#include "kinrisk/fit_io.hpp"
#include "kinrisk/risk.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace kinrisk;

namespace {

struct RunResult {
  int code;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("kinrisk_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  RunResult run(const std::string& args) const {
    const auto err = dir_ / "stderr.txt";
    const std::string cmd = std::string(KINRISK_CLI_PATH) + " " + args + " > " + (dir_ / "stdout.txt").string() + " 2> " + err.string();
    const int status = std::system(cmd.c_str());
    return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(err)};
  }

  fs::path write_data(const Dataset& d, const std::string& name = "data.csv") const {
    const auto path = dir_ / name;
    std::ofstream out(path);
    write_relatives(out, d);
    return path;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, FitOnGenotypedDataMatchesCoxOracle) {
  std::mt19937_64 rng(5);
  const auto d = testutil::random_mixture(rng, 150, false, true);
  const auto data = write_data(d);
  const auto r = run("fit --data " + data.string() + " --out " + (dir_ / "out").string() + " --interaction");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto f = read_fit(dir_ / "out" / "fit.json");
  std::vector<double> y;
  std::vector<int> delta;
  std::vector<double> wt;
  for (const auto& rec : d.records()) {
    y.push_back(rec.y);
    delta.push_back(rec.delta);
    wt.push_back(rec.weight);
  }
  const auto cox = oracle::cox_fit(y, delta, wt, 4, [&d](std::size_t i, double) {
    const double x = d[i].config_probs[0];
    Eigen::VectorXd v(4);
    v << x, d[i].w[0], x * d[i].w[0], d[i].z[0];
    return v;
  });
  for (int k = 0; k < 4; ++k) EXPECT_NEAR(f.coefficients()[static_cast<std::size_t>(k)], cox.beta(k), 1e-4);
  const auto hr = slurp(dir_ / "out" / "hr_table.csv");
  EXPECT_NE(hr.find("\"beta+theta_w\""), std::string::npos) << hr;
  EXPECT_NE(slurp(dir_ / "out" / "manifest.txt").find("command: fit"), std::string::npos);
}

TEST_F(Cli, IdentifiabilityViolationIsAValidationError) {
  const auto d = testutil::make_data({{50, 1, 0.51}, {60, 0, 0.51}, {70, 1, 0.51}});
  const auto r = run("fit --data " + write_data(d).string() + " --out " + (dir_ / "out").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("identifiability"), std::string::npos) << r.err;
}

TEST_F(Cli, RerunIsByteIdentical) {
  std::mt19937_64 rng(6);
  const auto data = write_data(testutil::random_mixture(rng, 100, false));
  const std::string args = "fit --data " + data.string() + " --out " + (dir_ / "out").string() + " --boot-B 5 --seed 3";
  ASSERT_EQ(run(args).code, 0);
  const auto fit1 = slurp(dir_ / "out" / "fit.json");
  const auto hr1 = slurp(dir_ / "out" / "hr_table.csv");
  const auto man1 = slurp(dir_ / "out" / "manifest.txt");
  ASSERT_EQ(run(args).code, 0);
  EXPECT_EQ(slurp(dir_ / "out" / "fit.json"), fit1);
  EXPECT_EQ(slurp(dir_ / "out" / "hr_table.csv"), hr1);
  EXPECT_EQ(slurp(dir_ / "out" / "manifest.txt"), man1);
  EXPECT_EQ(run("fit --data " + data.string() + " --boot-B 5").code, 2);
}

TEST_F(Cli, SampleSizeFromPublishedCurves) {
  const auto curves = dir_ / "curves.csv";
  {
    std::ofstream out(curves);
    out << "age,risk,label\n";
    const double c[] = {0.0727, 0.1144, 0.1674, 0.2081, 0.2475};
    const double n[] = {0.0301, 0.0480, 0.0715, 0.0901, 0.1087};
    for (int k = 0; k < 5; ++k) out << 60 + 5 * k << ',' << c[k] << ",carrier\n";
    for (int k = 0; k < 5; ++k) out << 60 + 5 * k << ',' << n[k] << ",noncarrier\n";
  }
  const auto r = run("samplesize --curves " + curves.string() + " --round 3 --out " + (dir_ / "out").string());
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream design(slurp(dir_ / "out" / "design.csv"));
  std::string line;
  std::getline(design, line);
  const long full[] = {657, 521, 622, 589};
  const long half[] = {3169, 2492, 2987, 2839};
  for (int k = 0; k < 4; ++k) {
    ASSERT_TRUE(std::getline(design, line));
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    ASSERT_EQ(cells.size(), 8u) << line;
    EXPECT_LE(std::labs(std::stol(cells[4]) - full[k]), 2) << line;
    EXPECT_LE(std::labs(std::stol(cells[7]) - half[k]), 2) << line;
  }
}

TEST_F(Cli, RiskProfileIsTheConditionalReduction) {
  std::mt19937_64 rng(7);
  const auto data = write_data(testutil::random_mixture(rng, 120, false));
  ASSERT_EQ(run("fit --data " + data.string() + " --out " + (dir_ / "fit").string()).code, 0);
  const auto r = run("risk --fit " + (dir_ / "fit" / "fit.json").string() + " --profile carrier=1 --ages 0:80:5 --out " +
                     (dir_ / "risk").string());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto f = read_fit(dir_ / "fit" / "fit.json");
  const auto curves = read_curves(dir_ / "risk" / "curves.csv");
  ASSERT_EQ(curves.size(), 1u);
  for (std::size_t k = 0; k < curves[0].ages.size(); ++k) {
    const double lambda = f.params.baseline.cumulative(curves[0].ages[k]);
    EXPECT_NEAR(curves[0].risk[k], 1.0 - std::exp(-lambda * std::exp(f.params.alpha[0])), 1e-14);
  }
  const auto m = run("risk --fit " + (dir_ / "fit" / "fit.json").string() + " --data " + data.string() +
                     " --ages 0:80:5 --out " + (dir_ / "marg").string());
  ASSERT_EQ(m.code, 0) << m.err;
  EXPECT_EQ(read_curves(dir_ / "marg" / "curves.csv").size(), 2u);
  EXPECT_EQ(run("risk --fit " + (dir_ / "fit" / "fit.json").string() + " --profile bogus=1").code, 2);
}

TEST_F(Cli, SimulateIsDeterministic) {
  const std::string base = "simulate --reps 2 --seed 7 --boot-B 3 --n 300 --ages 60,70 --out ";
  ASSERT_EQ(run(base + (dir_ / "a").string()).code, 0);
  ASSERT_EQ(run(base + (dir_ / "b").string()).code, 0);
  const auto a = slurp(dir_ / "a" / "report.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir_ / "b" / "report.csv"));
  EXPECT_EQ(run("simulate --reps 2").code, 2);
}

TEST_F(Cli, GenerateThenBootstrapAndBic) {
  ASSERT_EQ(run("generate --seed 4 --n 400 --out " + (dir_ / "gen").string()).code, 0);
  const auto parsed = parse_relatives(dir_ / "gen" / "data.csv");
  EXPECT_EQ(parsed.data.size(), 400u);
  const auto data = (dir_ / "gen" / "data.csv").string();
  const auto b = run("bootstrap --data " + data + " --interaction --boot-B 4 --seed 1 --ages 50:80:10 --out " +
                     (dir_ / "boot").string());
  ASSERT_EQ(b.code, 0) << b.err;
  EXPECT_TRUE(fs::exists(dir_ / "boot" / "bootstrap.csv"));
  EXPECT_EQ(read_curves(dir_ / "boot" / "curves.csv").size(), 2u);
  const auto s = run("bic --data " + data + " --degrees 1,2 --knots 0,1 --out " + (dir_ / "bic").string());
  ASSERT_EQ(s.code, 0) << s.err;
  EXPECT_NE(slurp(dir_ / "bic" / "bic.csv").find("selected"), std::string::npos);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("fit --data /nonexistent/data.csv").code, 4);
  EXPECT_EQ(run("fit --no-such-flag").code, 2);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("--help").code, 0);
  std::mt19937_64 rng(8);
  const auto data = write_data(testutil::random_mixture(rng, 100, false));
  const auto r = run("fit --data " + data.string() + " --max-iters 1 --out " + (dir_ / "out").string());
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("did not converge"), std::string::npos) << r.err;
  {
    std::ofstream bad(dir_ / "bad.csv");
    bad << "family_id,y,delta,p_carrier\nA,50,1,0.5\nA,6O,1,0.02\n";
  }
  const auto p = run("fit --data " + (dir_ / "bad.csv").string());
  EXPECT_EQ(p.code, 2);
  EXPECT_NE(p.err.find("row 3"), std::string::npos) << p.err;
}
