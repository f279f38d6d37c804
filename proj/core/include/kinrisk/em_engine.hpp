#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kinrisk/data_model.hpp"
#include "kinrisk/spline.hpp"

namespace kinrisk {

// Hazard model
//   lambda(t | X, U, W, Z) = lambda0(t) exp{beta(t) X + beta2(t) U + eta'W + theta'W X + gamma'Z}
// with beta(t) expanded in `basis` and the U term present only for two genes.
//
// Genotype configurations are indexed c = 0..n_configs()-1. For one gene,
// c is the carrier status X. For two genes, c = 2X + U, matching the order of
// RelativeRecord::config_probs.
struct ModelSpec {
  SplineBasis basis = SplineBasis::constant();
  std::optional<SplineBasis> second_gene;
  bool interaction = false;
  std::size_t w_dim = 0;
  std::size_t z_dim = 0;

  std::size_t n_configs() const noexcept { return second_gene ? 4 : 2; }
  static int carrier_of(std::size_t config, std::size_t n_configs) noexcept;
  static int second_of(std::size_t config, std::size_t n_configs) noexcept;

  // Euclidean parameter count: spline coefficients plus eta, theta, gamma.
  std::size_t n_params() const noexcept;

  // Names in packed order: beta | alpha_j, [beta2 | alpha2_j], eta_*, theta_*, gamma_*.
  std::vector<std::string> param_names(const std::vector<std::string>& w_names,
                                       const std::vector<std::string>& z_names) const;

  // Throws ValidationError if dimensions disagree with the data.
  void check_against(const Dataset& data) const;
};

ModelSpec make_spec(const Dataset& data, SplineBasis basis, bool interaction,
                    std::optional<SplineBasis> second_gene = std::nullopt);

// Nelson-Aalen-type step function: jump sizes at ascending times.
struct BaselineHazard {
  std::vector<double> times;
  std::vector<double> jumps;

  // Sum of jumps at times <= t.
  double cumulative(double t) const;
};

struct ModelParams {
  std::vector<double> alpha;
  std::vector<double> alpha2;
  std::vector<double> eta;
  std::vector<double> theta;
  std::vector<double> gamma;
  BaselineHazard baseline;

  static ModelParams zeros(const ModelSpec& spec);

  std::vector<double> packed() const;
  void unpack(std::span<const double> values, const ModelSpec& spec);
};

// Posterior configuration probabilities, one row of n_configs() per record.
class Posteriors {
public:
  Posteriors() = default;
  Posteriors(std::size_t n, std::size_t n_configs);

  std::size_t size() const noexcept { return n_; }
  std::size_t n_configs() const noexcept { return configs_; }

  double operator()(std::size_t i, std::size_t c) const { return values_[i * configs_ + c]; }
  double& operator()(std::size_t i, std::size_t c) { return values_[i * configs_ + c]; }
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * configs_, configs_}; }

  // P(X = 1 | observed data) for record i.
  double carrier(std::size_t i) const;
  std::vector<double> carrier_vector() const;

  // Prior configuration probabilities of the records (the E-step at beta = 0 limit).
  static Posteriors from_prior(const Dataset& data);

  bool operator==(const Posteriors&) const = default;

private:
  std::size_t n_ = 0;
  std::size_t configs_ = 0;
  std::vector<double> values_;
};

struct EmConfig {
  double tol = 1e-8;         // |dl| / (|l| + 1)
  int max_iters = 2000;
  int newton_inner = 5;      // Newton steps per M-step
  double score_tol = 1e-9;   // max-norm of the profiled score
  std::optional<ModelParams> init;

  void validate() const;
};

struct FitResult {
  ModelSpec spec;
  std::vector<std::string> w_names;
  std::vector<std::string> z_names;
  ModelParams params;
  Posteriors posteriors;  // in record order of the fitted dataset
  double loglik = 0.0;
  std::vector<double> loglik_trace;  // initial value followed by one entry per iteration
  int iters = 0;
  bool converged = false;

  std::vector<std::string> param_names() const { return spec.param_names(w_names, z_names); }
  std::vector<double> coefficients() const { return params.packed(); }
  double coefficient(const std::string& name) const;

  double beta(double t) const;
  double beta2(double t) const;
};

// Weighted observed-data mixture log-likelihood. The baseline must carry a
// positive jump at every event time of `data`.
double observed_loglik(const Dataset& data, const ModelSpec& spec, const ModelParams& params);

// Posterior configuration probabilities given the current parameters.
Posteriors e_step(const Dataset& data, const ModelSpec& spec, const ModelParams& params);

// Closed-form baseline jumps at the distinct event times for fixed posteriors
// and regression coefficients (ties pooled Breslow-style).
BaselineHazard m_step_baseline(const Dataset& data, const ModelSpec& spec, const Posteriors& q,
                               const ModelParams& coeffs);

// Newton-Raphson with step-halving on the expected complete-data
// log-likelihood with the baseline profiled out. Returns updated coefficients;
// the baseline is copied from `current` unchanged.
ModelParams m_step_coeffs(const Dataset& data, const ModelSpec& spec, const Posteriors& q,
                          const ModelParams& current, int newton_inner = 5,
                          double score_tol = 1e-9);

// Profiled M-step objective and its analytic gradient in packed order.
double profiled_objective(const Dataset& data, const ModelSpec& spec, const Posteriors& q,
                          std::span<const double> packed);
std::vector<double> profiled_score(const Dataset& data, const ModelSpec& spec, const Posteriors& q,
                                   std::span<const double> packed);

// EM fit. Throws ValidationError on an unidentifiable or event-free dataset;
// non-convergence is reported through FitResult::converged.
FitResult fit(const Dataset& data, const ModelSpec& spec, const EmConfig& cfg = {});

// Two-gene fit: requires 4-entry config_probs and spec.second_gene.
FitResult fit_multigene(const Dataset& data, const ModelSpec& spec, const EmConfig& cfg = {});

}  // namespace kinrisk
