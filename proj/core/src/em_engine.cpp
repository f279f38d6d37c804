#include "kinrisk/em_engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Dense>

#include "kinrisk/errors.hpp"

namespace kinrisk {

int ModelSpec::carrier_of(std::size_t config, std::size_t n_configs) noexcept {
  return n_configs == 4 ? static_cast<int>(config >> 1) : static_cast<int>(config);
}

int ModelSpec::second_of(std::size_t config, std::size_t n_configs) noexcept {
  return n_configs == 4 ? static_cast<int>(config & 1) : 0;
}

std::size_t ModelSpec::n_params() const noexcept {
  return basis.size() + (second_gene ? second_gene->size() : 0) + w_dim +
         (interaction ? w_dim : 0) + z_dim;
}

std::vector<std::string> ModelSpec::param_names(const std::vector<std::string>& w_names,
                                                const std::vector<std::string>& z_names) const {
  std::vector<std::string> names;
  if (basis.is_constant()) {
    names.emplace_back("beta");
  } else {
    for (std::size_t j = 0; j < basis.size(); ++j) names.push_back("alpha_" + std::to_string(j + 1));
  }
  if (second_gene) {
    if (second_gene->is_constant()) {
      names.emplace_back("beta2");
    } else {
      for (std::size_t j = 0; j < second_gene->size(); ++j) {
        names.push_back("alpha2_" + std::to_string(j + 1));
      }
    }
  }
  auto label = [](const std::vector<std::string>& src, std::size_t j) {
    return j < src.size() ? src[j] : std::to_string(j + 1);
  };
  for (std::size_t j = 0; j < w_dim; ++j) names.push_back("eta_" + label(w_names, j));
  if (interaction) {
    for (std::size_t j = 0; j < w_dim; ++j) names.push_back("theta_" + label(w_names, j));
  }
  for (std::size_t j = 0; j < z_dim; ++j) names.push_back("gamma_" + label(z_names, j));
  return names;
}

void ModelSpec::check_against(const Dataset& data) const {
  if (data.w_dim() != w_dim || data.z_dim() != z_dim) {
    throw ValidationError("model covariate dimensions do not match the dataset");
  }
  if (data.two_gene() != second_gene.has_value()) {
    throw ValidationError(second_gene
                              ? "two-gene model requires 4-entry configuration probabilities"
                              : "two-gene data requires a second-gene basis in the model");
  }
}

ModelSpec make_spec(const Dataset& data, SplineBasis basis, bool interaction,
                    std::optional<SplineBasis> second_gene) {
  ModelSpec spec;
  spec.basis = std::move(basis);
  spec.second_gene = std::move(second_gene);
  spec.interaction = interaction;
  spec.w_dim = data.w_dim();
  spec.z_dim = data.z_dim();
  return spec;
}

double BaselineHazard::cumulative(double t) const {
  double total = 0.0;
  for (std::size_t j = 0; j < times.size() && times[j] <= t; ++j) total += jumps[j];
  return total;
}

ModelParams ModelParams::zeros(const ModelSpec& spec) {
  ModelParams p;
  p.alpha.assign(spec.basis.size(), 0.0);
  p.alpha2.assign(spec.second_gene ? spec.second_gene->size() : 0, 0.0);
  p.eta.assign(spec.w_dim, 0.0);
  p.theta.assign(spec.interaction ? spec.w_dim : 0, 0.0);
  p.gamma.assign(spec.z_dim, 0.0);
  return p;
}

std::vector<double> ModelParams::packed() const {
  std::vector<double> out;
  for (const auto* part : {&alpha, &alpha2, &eta, &theta, &gamma}) {
    out.insert(out.end(), part->begin(), part->end());
  }
  return out;
}

void ModelParams::unpack(std::span<const double> values, const ModelSpec& spec) {
  if (values.size() != spec.n_params()) throw ValidationError("packed parameter length mismatch");
  auto take = [&values](std::vector<double>& dst, std::size_t count) {
    dst.assign(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(count));
    values = values.subspan(count);
  };
  take(alpha, spec.basis.size());
  take(alpha2, spec.second_gene ? spec.second_gene->size() : 0);
  take(eta, spec.w_dim);
  take(theta, spec.interaction ? spec.w_dim : 0);
  take(gamma, spec.z_dim);
}

Posteriors::Posteriors(std::size_t n, std::size_t n_configs)
    : n_(n), configs_(n_configs), values_(n * n_configs, 0.0) {}

double Posteriors::carrier(std::size_t i) const {
  double total = 0.0;
  for (std::size_t c = 0; c < configs_; ++c) {
    if (ModelSpec::carrier_of(c, configs_) == 1) total += (*this)(i, c);
  }
  return total;
}

std::vector<double> Posteriors::carrier_vector() const {
  std::vector<double> out(n_);
  for (std::size_t i = 0; i < n_; ++i) out[i] = carrier(i);
  return out;
}

Posteriors Posteriors::from_prior(const Dataset& data) {
  const std::size_t configs = data.two_gene() ? 4 : 2;
  Posteriors q(data.size(), configs);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& probs = data[i].config_probs;
    if (configs == 2) {
      q(i, 0) = 1.0 - probs[0];
      q(i, 1) = probs[0];
    } else {
      for (std::size_t c = 0; c < 4; ++c) q(i, c) = probs[c];
    }
  }
  return q;
}

void EmConfig::validate() const {
  if (!(tol > 0.0)) throw ValidationError("EM tolerance must be positive");
  if (max_iters < 1) throw ValidationError("EM iteration cap must be >= 1");
  if (newton_inner < 1) throw ValidationError("Newton step cap must be >= 1");
  if (!(score_tol > 0.0)) throw ValidationError("score tolerance must be positive");
}

double FitResult::coefficient(const std::string& name) const {
  const auto names = param_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ValidationError("unknown coefficient '" + name + "'");
  return coefficients()[static_cast<std::size_t>(it - names.begin())];
}

double FitResult::beta(double t) const {
  const auto phi = spec.basis.eval(t);
  return std::inner_product(phi.begin(), phi.end(), params.alpha.begin(), 0.0);
}

double FitResult::beta2(double t) const {
  if (!spec.second_gene) return 0.0;
  const auto phi = spec.second_gene->eval(t);
  return std::inner_product(phi.begin(), phi.end(), params.alpha2.begin(), 0.0);
}

namespace {

// Offsets of each parameter block inside the packed coefficient vector.
struct Layout {
  explicit Layout(const ModelSpec& spec)
      : k1(spec.basis.size()),
        k2(spec.second_gene ? spec.second_gene->size() : 0),
        pw(spec.w_dim),
        pth(spec.interaction ? spec.w_dim : 0),
        pz(spec.z_dim),
        a2(k1),
        eta(k1 + k2),
        theta(eta + pw),
        gamma(theta + pth),
        P(gamma + pz) {}

  std::size_t k1, k2, pw, pth, pz;
  std::size_t a2, eta, theta, gamma, P;
};

// Quantities that depend on the coefficients only.
struct LinearState {
  std::vector<double> v;      // n x 2: static linear predictor for X = 0, 1
  std::vector<double> ev;     // exp(v)
  std::vector<double> betac;  // J x C: time-varying genetic log-HR of each configuration
};

// Risk-set accumulators reused across passes.
struct Scratch {
  std::vector<double> A, S1, S2, M, V, tau;
};

// Records sorted by observed time together with everything the E- and M-steps
// need on a fixed grid of baseline jump times.
class Workspace {
public:
  Workspace(const Dataset& data, const ModelSpec& spec, std::vector<double> grid)
      : layout_(spec), n_(data.size()), C_(spec.n_configs()), times_(std::move(grid)) {
    const std::size_t P = layout_.P;
    names_ = spec.param_names(data.w_names(), data.z_names());

    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    const auto& recs = data.records();
    // Total order on record content so that input permutations give identical sums.
    std::sort(order_.begin(), order_.end(), [&recs](std::size_t a, std::size_t b) {
      const auto& ra = recs[a];
      const auto& rb = recs[b];
      if (ra.y != rb.y) return ra.y < rb.y;
      if (ra.delta != rb.delta) return ra.delta < rb.delta;
      if (ra.config_probs != rb.config_probs) return ra.config_probs < rb.config_probs;
      if (ra.w != rb.w) return ra.w < rb.w;
      if (ra.z != rb.z) return ra.z < rb.z;
      return ra.weight < rb.weight;
    });

    for (int c = 0; c < static_cast<int>(C_); ++c) {
      cx_[c] = ModelSpec::carrier_of(static_cast<std::size_t>(c), C_);
      cu_[c] = ModelSpec::second_of(static_cast<std::size_t>(c), C_);
    }

    y_.resize(n_);
    w_.resize(n_);
    delta_.resize(n_);
    prior_.assign(n_ * C_, 0.0);
    design_.assign(n_ * 2 * P, 0.0);
    std::vector<bool> mass_x(2, false);
    std::vector<bool> mass_u(2, false);
    for (std::size_t s = 0; s < n_; ++s) {
      const auto& r = recs[order_[s]];
      y_[s] = r.y;
      w_[s] = r.weight;
      delta_[s] = static_cast<char>(r.delta);
      if (C_ == 2) {
        prior_[s * C_] = 1.0 - r.config_probs[0];
        prior_[s * C_ + 1] = r.config_probs[0];
      } else {
        for (std::size_t c = 0; c < 4; ++c) prior_[s * C_ + c] = r.config_probs[c];
      }
      for (std::size_t c = 0; c < C_; ++c) {
        if (prior_[s * C_ + c] > 0.0) {
          mass_x[static_cast<std::size_t>(cx_[c])] = true;
          mass_u[static_cast<std::size_t>(cu_[c])] = true;
        }
      }
      for (int x = 0; x < 2; ++x) {
        double* d = &design_[(s * 2 + static_cast<std::size_t>(x)) * P];
        for (std::size_t j = 0; j < layout_.pw; ++j) d[layout_.eta + j] = r.w[j];
        for (std::size_t j = 0; j < layout_.pth; ++j) d[layout_.theta + j] = x * r.w[j];
        for (std::size_t j = 0; j < layout_.pz; ++j) d[layout_.gamma + j] = r.z[j];
      }
    }

    // Genetic parameters of configurations with no prior mass never enter
    // the likelihood; hold them at their starting values.
    frozen_.assign(P, false);
    if (!mass_x[1]) {
      for (std::size_t j = 0; j < layout_.k1; ++j) frozen_[j] = true;
      for (std::size_t j = 0; j < layout_.pth; ++j) frozen_[layout_.theta + j] = true;
    }
    if (!mass_u[1]) {
      for (std::size_t j = 0; j < layout_.k2; ++j) frozen_[layout_.a2 + j] = true;
    }

    const std::size_t J = times_.size();
    for (std::size_t j = 1; j < J; ++j) {
      if (!(times_[j] > times_[j - 1])) throw ValidationError("baseline times must be strictly increasing");
    }
    dcount_.assign(J, 0.0);
    event_grid_.assign(n_, -1);
    upto_.assign(n_, 0);
    risk_start_.assign(J, 0);
    for (std::size_t s = 0; s < n_; ++s) {
      upto_[s] = static_cast<std::size_t>(std::upper_bound(times_.begin(), times_.end(), y_[s]) - times_.begin());
      if (delta_[s]) {
        if (upto_[s] == 0 || times_[upto_[s] - 1] != y_[s]) {
          throw ValidationError("baseline has no jump at event time " + format_double(y_[s]));
        }
        event_grid_[s] = static_cast<int>(upto_[s] - 1);
        dcount_[upto_[s] - 1] += w_[s];
      }
    }
    for (std::size_t j = 0; j < J; ++j) {
      risk_start_[j] = static_cast<std::size_t>(std::lower_bound(y_.begin(), y_.end(), times_[j]) - y_.begin());
    }

    phi1_.assign(J * layout_.k1, 0.0);
    phi2_.assign(J * layout_.k2, 0.0);
    for (std::size_t j = 0; j < J; ++j) {
      spec.basis.eval(times_[j], std::span<double>(&phi1_[j * layout_.k1], layout_.k1));
      if (spec.second_gene) {
        spec.second_gene->eval(times_[j], std::span<double>(&phi2_[j * layout_.k2], layout_.k2));
      }
    }

    scratch_.A.resize(C_);
    scratch_.S1.resize(C_ * P);
    scratch_.S2.resize(C_ * P * P);
    scratch_.M.resize(P);
    scratch_.V.resize(P * P);
    scratch_.tau.resize(P);
  }

  std::size_t n() const { return n_; }
  std::size_t configs() const { return C_; }
  std::size_t n_params() const { return layout_.P; }
  std::size_t grid_size() const { return times_.size(); }
  const std::vector<double>& times() const { return times_; }
  const std::vector<std::size_t>& order() const { return order_; }
  const std::vector<double>& prior() const { return prior_; }

  std::vector<double> to_sorted(const Posteriors& q) const {
    if (q.size() != n_ || q.n_configs() != C_) throw ValidationError("posterior dimensions do not match the data");
    std::vector<double> out(n_ * C_);
    for (std::size_t s = 0; s < n_; ++s) {
      for (std::size_t c = 0; c < C_; ++c) {
        const double v = q(order_[s], c);
        if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("posterior probabilities must lie in [0, 1]");
        out[s * C_ + c] = v;
      }
    }
    return out;
  }

  Posteriors from_sorted(const std::vector<double>& q) const {
    Posteriors out(n_, C_);
    for (std::size_t s = 0; s < n_; ++s) {
      for (std::size_t c = 0; c < C_; ++c) out(order_[s], c) = q[s * C_ + c];
    }
    return out;
  }

  void linear(std::span<const double> b, LinearState& st) const {
    const std::size_t P = layout_.P;
    const std::size_t J = times_.size();
    st.v.resize(n_ * 2);
    st.ev.resize(n_ * 2);
    for (std::size_t k = 0; k < n_ * 2; ++k) {
      const double* d = &design_[k * P];
      double acc = 0.0;
      for (std::size_t p = layout_.eta; p < P; ++p) acc += b[p] * d[p];
      st.v[k] = acc;
      st.ev[k] = std::exp(acc);
    }
    st.betac.resize(J * C_);
    for (std::size_t j = 0; j < J; ++j) {
      double b1 = 0.0;
      for (std::size_t i = 0; i < layout_.k1; ++i) b1 += b[i] * phi1_[j * layout_.k1 + i];
      double b2 = 0.0;
      for (std::size_t i = 0; i < layout_.k2; ++i) b2 += b[layout_.a2 + i] * phi2_[j * layout_.k2 + i];
      for (std::size_t c = 0; c < C_; ++c) st.betac[j * C_ + c] = cx_[c] * b1 + cu_[c] * b2;
    }
  }

  // E-step on the grid. Writes posteriors (sorted order, n x C) and returns the
  // weighted observed-data log-likelihood at the same parameters.
  double estep(const LinearState& st, std::span<const double> jumps, std::vector<double>& q) const {
    const std::size_t J = times_.size();
    std::vector<double> G(J * C_);
    std::vector<double> running(C_, 0.0);
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t c = 0; c < C_; ++c) {
        running[c] += jumps[j] * std::exp(st.betac[j * C_ + c]);
        G[j * C_ + c] = running[c];
      }
    }
    q.assign(n_ * C_, 0.0);
    double loglik = 0.0;
    double ell[4];
    for (std::size_t s = 0; s < n_; ++s) {
      const std::size_t m = upto_[s];
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < C_; ++c) {
        if (prior_[s * C_ + c] == 0.0) continue;
        const std::size_t kx = s * 2 + static_cast<std::size_t>(cx_[c]);
        const double H = m > 0 ? st.ev[kx] * G[(m - 1) * C_ + c] : 0.0;
        double l = -H;
        if (delta_[s]) l += st.v[kx] + st.betac[static_cast<std::size_t>(event_grid_[s]) * C_ + c];
        ell[c] = l;
        mx = std::max(mx, l);
      }
      if (!std::isfinite(mx)) {
        throw NumericalError("E-step underflow: every configuration has zero likelihood");
      }
      double total = 0.0;
      for (std::size_t c = 0; c < C_; ++c) {
        const double pr = prior_[s * C_ + c];
        if (pr == 0.0) continue;
        const double t = pr * std::exp(ell[c] - mx);
        q[s * C_ + c] = t;
        total += t;
      }
      if (!(total > 0.0) || !std::isfinite(total)) {
        throw NumericalError("E-step produced a non-finite normalizing constant");
      }
      for (std::size_t c = 0; c < C_; ++c) q[s * C_ + c] /= total;
      double term = mx + std::log(total);
      if (delta_[s]) term += std::log(jumps[static_cast<std::size_t>(event_grid_[s])]);
      loglik += w_[s] * term;
    }
    return loglik;
  }

  // One sweep over risk sets from the latest time backwards. Returns the
  // profiled M-step objective; optionally fills the closed-form jumps, the
  // gradient and the Hessian (P x P, row-major).
  double pass(const LinearState& st, std::span<const double> q, double* jumps, double* grad,
              double* hess) const {
    const std::size_t P = layout_.P;
    const std::size_t J = times_.size();
    const std::size_t lo = layout_.eta;
    const bool deriv = grad != nullptr;
    auto& A = scratch_.A;
    auto& S1 = scratch_.S1;
    auto& S2 = scratch_.S2;
    auto& M = scratch_.M;
    auto& V = scratch_.V;
    auto& tau = scratch_.tau;
    std::fill(A.begin(), A.end(), 0.0);
    if (deriv) {
      std::fill(S1.begin(), S1.end(), 0.0);
      std::fill(S2.begin(), S2.end(), 0.0);
      std::fill(grad, grad + P, 0.0);
      if (hess) std::fill(hess, hess + P * P, 0.0);
    }

    double obj = 0.0;
    for (std::size_t s = 0; s < n_; ++s) {
      if (!delta_[s]) continue;
      const auto j = static_cast<std::size_t>(event_grid_[s]);
      for (std::size_t c = 0; c < C_; ++c) {
        const double qq = q[s * C_ + c];
        if (qq == 0.0) continue;
        const double wt = w_[s] * qq;
        const std::size_t kx = s * 2 + static_cast<std::size_t>(cx_[c]);
        obj += wt * (st.v[kx] + st.betac[j * C_ + c]);
        if (deriv) {
          const double* d = &design_[kx * P];
          for (std::size_t p = lo; p < P; ++p) grad[p] += wt * d[p];
          if (cx_[c]) {
            for (std::size_t i = 0; i < layout_.k1; ++i) grad[i] += wt * phi1_[j * layout_.k1 + i];
          }
          if (cu_[c]) {
            for (std::size_t i = 0; i < layout_.k2; ++i) {
              grad[layout_.a2 + i] += wt * phi2_[j * layout_.k2 + i];
            }
          }
        }
      }
    }

    std::size_t s = n_;
    for (std::size_t jj = J; jj-- > 0;) {
      while (s > risk_start_[jj]) {
        --s;
        for (std::size_t c = 0; c < C_; ++c) {
          const double qq = q[s * C_ + c];
          if (qq == 0.0) continue;
          const std::size_t kx = s * 2 + static_cast<std::size_t>(cx_[c]);
          const double wt = w_[s] * qq * st.ev[kx];
          A[c] += wt;
          if (deriv) {
            const double* d = &design_[kx * P];
            double* s1 = &S1[c * P];
            double* s2 = &S2[c * P * P];
            for (std::size_t p = lo; p < P; ++p) {
              const double wd = wt * d[p];
              s1[p] += wd;
              for (std::size_t r = lo; r <= p; ++r) s2[p * P + r] += wd * d[r];
            }
          }
        }
      }
      const double dj = dcount_[jj];
      if (dj == 0.0) {
        if (jumps) jumps[jj] = 0.0;
        continue;
      }
      double D = 0.0;
      double e[4];
      for (std::size_t c = 0; c < C_; ++c) {
        e[c] = std::exp(st.betac[jj * C_ + c]);
        D += e[c] * A[c];
      }
      if (!(D > 0.0)) throw NumericalError("empty risk set at event time " + format_double(times_[jj]));
      if (jumps) jumps[jj] = dj / D;
      obj -= dj * std::log(D);
      if (!deriv) continue;

      std::fill(M.begin(), M.end(), 0.0);
      if (hess) std::fill(V.begin(), V.end(), 0.0);
      for (std::size_t c = 0; c < C_; ++c) {
        if (A[c] == 0.0) continue;
        std::fill(tau.begin(), tau.end(), 0.0);
        if (cx_[c]) {
          for (std::size_t i = 0; i < layout_.k1; ++i) tau[i] = phi1_[jj * layout_.k1 + i];
        }
        if (cu_[c]) {
          for (std::size_t i = 0; i < layout_.k2; ++i) tau[layout_.a2 + i] = phi2_[jj * layout_.k2 + i];
        }
        const double ec = e[c];
        const double* s1 = &S1[c * P];
        const double* s2 = &S2[c * P * P];
        for (std::size_t p = 0; p < P; ++p) M[p] += ec * (s1[p] + tau[p] * A[c]);
        if (hess) {
          for (std::size_t p = 0; p < P; ++p) {
            for (std::size_t r = 0; r <= p; ++r) {
              V[p * P + r] += ec * (s2[p * P + r] + tau[p] * s1[r] + s1[p] * tau[r] + tau[p] * tau[r] * A[c]);
            }
          }
        }
      }
      for (std::size_t p = 0; p < P; ++p) grad[p] -= dj * M[p] / D;
      if (hess) {
        for (std::size_t p = 0; p < P; ++p) {
          for (std::size_t r = 0; r <= p; ++r) {
            hess[p * P + r] -= dj * (V[p * P + r] / D - M[p] * M[r] / (D * D));
          }
        }
      }
    }
    if (hess) {
      for (std::size_t p = 0; p < P; ++p) {
        for (std::size_t r = 0; r < p; ++r) hess[r * P + p] = hess[p * P + r];
      }
    }
    return obj;
  }

  // Damped Newton-Raphson on the profiled objective for fixed posteriors.
  void newton(std::span<const double> q, std::vector<double>& b, int max_steps, double score_tol) const {
    const std::size_t P = layout_.P;
    std::vector<std::size_t> active;
    for (std::size_t p = 0; p < P; ++p) {
      if (!frozen_[p]) active.push_back(p);
    }
    if (active.empty()) return;
    const auto na = static_cast<Eigen::Index>(active.size());

    LinearState st;
    LinearState trial;
    std::vector<double> grad(P);
    std::vector<double> hess(P * P);
    std::vector<double> b_try(P);
    for (int step = 0; step < max_steps; ++step) {
      linear(b, st);
      const double obj = pass(st, q, nullptr, grad.data(), hess.data());
      Eigen::VectorXd g(na);
      Eigen::MatrixXd info(na, na);
      double gmax = 0.0;
      for (Eigen::Index a = 0; a < na; ++a) {
        g(a) = grad[active[static_cast<std::size_t>(a)]];
        gmax = std::max(gmax, std::abs(g(a)));
        for (Eigen::Index r = 0; r < na; ++r) {
          info(a, r) = -hess[active[static_cast<std::size_t>(a)] * P + active[static_cast<std::size_t>(r)]];
        }
      }
      if (!std::isfinite(gmax)) throw NumericalError("non-finite score in the M-step");
      if (gmax < score_tol) break;

      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
      const auto& lambda = eig.eigenvalues();
      const double top = std::max(lambda.cwiseAbs().maxCoeff(), 1e-300);
      if (eig.info() != Eigen::Success || lambda.minCoeff() <= 1e-10 * top) {
        Eigen::Index worst = 0;
        lambda.minCoeff(&worst);
        const Eigen::VectorXd dir = eig.eigenvectors().col(worst);
        std::ostringstream msg;
        msg << "singular M-step Hessian: non-identifiable direction involving";
        for (Eigen::Index a = 0; a < na; ++a) {
          if (std::abs(dir(a)) > 0.2) msg << ' ' << names_[active[static_cast<std::size_t>(a)]];
        }
        msg << " (e.g. a covariate constant within both mixture components)";
        throw NumericalError(msg.str());
      }
      const Eigen::VectorXd dir =
          eig.eigenvectors() * (eig.eigenvectors().transpose() * g).cwiseQuotient(lambda);
      const double gain = g.dot(dir);
      const double floor = 1e-13 * (1.0 + std::abs(obj));

      double t = 1.0;
      bool accepted = false;
      for (int half = 0; half < 40; ++half, t *= 0.5) {
        b_try = b;
        for (Eigen::Index a = 0; a < na; ++a) b_try[active[static_cast<std::size_t>(a)]] += t * dir(a);
        linear(b_try, trial);
        double obj_try = -std::numeric_limits<double>::infinity();
        try {
          obj_try = pass(trial, q, nullptr, nullptr, nullptr);
        } catch (const NumericalError&) {
        }
        if (!std::isfinite(obj_try)) continue;
        if (obj_try >= obj || (t * gain <= floor && obj_try >= obj - floor)) {
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
      b.swap(b_try);
    }
  }

private:
  Layout layout_;
  std::size_t n_;
  std::size_t C_;
  std::vector<double> times_;
  std::vector<std::string> names_;
  std::vector<std::size_t> order_;
  int cx_[4] = {0, 0, 0, 0};
  int cu_[4] = {0, 0, 0, 0};
  std::vector<double> y_;
  std::vector<double> w_;
  std::vector<char> delta_;
  std::vector<double> prior_;
  std::vector<double> design_;
  std::vector<bool> frozen_;
  std::vector<double> dcount_;
  std::vector<int> event_grid_;
  std::vector<std::size_t> upto_;
  std::vector<std::size_t> risk_start_;
  std::vector<double> phi1_;
  std::vector<double> phi2_;
  mutable Scratch scratch_;
};

std::vector<double> event_grid(const Dataset& data) {
  std::vector<double> times;
  for (const auto& r : data.records()) {
    if (r.delta == 1) times.push_back(r.y);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return times;
}

void check_params(const ModelSpec& spec, const ModelParams& params) {
  if (params.alpha.size() != spec.basis.size() ||
      params.alpha2.size() != (spec.second_gene ? spec.second_gene->size() : 0) ||
      params.eta.size() != spec.w_dim || params.theta.size() != (spec.interaction ? spec.w_dim : 0) ||
      params.gamma.size() != spec.z_dim) {
    throw ValidationError("parameter dimensions do not match the model");
  }
  for (double v : params.packed()) {
    if (!std::isfinite(v)) throw ValidationError("non-finite model coefficient");
  }
}

// Workspace on the baseline's own grid, for evaluating given parameters.
Workspace baseline_workspace(const Dataset& data, const ModelSpec& spec, const ModelParams& params) {
  spec.check_against(data);
  check_params(spec, params);
  const auto& bl = params.baseline;
  if (bl.times.size() != bl.jumps.size()) throw ValidationError("baseline times and jumps differ in length");
  for (double j : bl.jumps) {
    if (!(j >= 0.0) || !std::isfinite(j)) throw ValidationError("baseline jumps must be finite and >= 0");
  }
  Workspace ws(data, spec, bl.times);
  for (const auto& r : data.records()) {
    if (r.delta != 1) continue;
    const auto it = std::lower_bound(bl.times.begin(), bl.times.end(), r.y);
    if (bl.jumps[static_cast<std::size_t>(it - bl.times.begin())] <= 0.0) {
      throw ValidationError("baseline jump is zero at event time " + format_double(r.y));
    }
  }
  return ws;
}

}  // namespace

double observed_loglik(const Dataset& data, const ModelSpec& spec, const ModelParams& params) {
  const Workspace ws = baseline_workspace(data, spec, params);
  LinearState st;
  ws.linear(params.packed(), st);
  std::vector<double> q;
  return ws.estep(st, params.baseline.jumps, q);
}

Posteriors e_step(const Dataset& data, const ModelSpec& spec, const ModelParams& params) {
  const Workspace ws = baseline_workspace(data, spec, params);
  LinearState st;
  ws.linear(params.packed(), st);
  std::vector<double> q;
  ws.estep(st, params.baseline.jumps, q);
  return ws.from_sorted(q);
}

BaselineHazard m_step_baseline(const Dataset& data, const ModelSpec& spec, const Posteriors& q,
                               const ModelParams& coeffs) {
  spec.check_against(data);
  check_params(spec, coeffs);
  const Workspace ws(data, spec, event_grid(data));
  LinearState st;
  ws.linear(coeffs.packed(), st);
  BaselineHazard out;
  out.times = ws.times();
  out.jumps.resize(out.times.size());
  ws.pass(st, ws.to_sorted(q), out.jumps.data(), nullptr, nullptr);
  return out;
}

ModelParams m_step_coeffs(const Dataset& data, const ModelSpec& spec, const Posteriors& q,
                          const ModelParams& current, int newton_inner, double score_tol) {
  spec.check_against(data);
  check_params(spec, current);
  const Workspace ws(data, spec, event_grid(data));
  auto b = current.packed();
  ws.newton(ws.to_sorted(q), b, newton_inner, score_tol);
  ModelParams out = current;
  out.unpack(b, spec);
  return out;
}

double profiled_objective(const Dataset& data, const ModelSpec& spec, const Posteriors& q,
                          std::span<const double> packed) {
  spec.check_against(data);
  const Workspace ws(data, spec, event_grid(data));
  LinearState st;
  ws.linear(packed, st);
  return ws.pass(st, ws.to_sorted(q), nullptr, nullptr, nullptr);
}

std::vector<double> profiled_score(const Dataset& data, const ModelSpec& spec, const Posteriors& q,
                                   std::span<const double> packed) {
  spec.check_against(data);
  const Workspace ws(data, spec, event_grid(data));
  LinearState st;
  ws.linear(packed, st);
  std::vector<double> grad(ws.n_params());
  ws.pass(st, ws.to_sorted(q), nullptr, grad.data(), nullptr);
  return grad;
}

FitResult fit(const Dataset& data, const ModelSpec& spec, const EmConfig& cfg) {
  cfg.validate();
  spec.check_against(data);
  check_identifiability(data);
  if (data.event_count() == 0) throw ValidationError("dataset has no events; the baseline hazard is not estimable");

  const Workspace ws(data, spec, event_grid(data));
  const std::size_t J = ws.grid_size();

  ModelParams start = cfg.init ? *cfg.init : ModelParams::zeros(spec);
  check_params(spec, start);
  std::vector<double> b = start.packed();

  LinearState st;
  ws.linear(b, st);
  std::vector<double> jumps(J);
  const bool warm_baseline = cfg.init && start.baseline.times == ws.times() &&
                             std::all_of(start.baseline.jumps.begin(), start.baseline.jumps.end(),
                                         [](double v) { return v > 0.0 && std::isfinite(v); });
  if (warm_baseline) {
    jumps = start.baseline.jumps;
  } else {
    ws.pass(st, ws.prior(), jumps.data(), nullptr, nullptr);
  }

  std::vector<double> q;
  double loglik = ws.estep(st, jumps, q);
  FitResult result;
  result.loglik_trace.push_back(loglik);

  int iter = 0;
  bool converged = false;
  while (iter < cfg.max_iters) {
    ++iter;
    ws.newton(q, b, cfg.newton_inner, cfg.score_tol);
    ws.linear(b, st);
    ws.pass(st, q, jumps.data(), nullptr, nullptr);
    std::vector<double> q_next;
    const double next = ws.estep(st, jumps, q_next);
    if (!std::isfinite(next)) throw NumericalError("observed log-likelihood became non-finite");
    result.loglik_trace.push_back(next);
    const double change = std::abs(next - loglik) / (std::abs(loglik) + 1.0);
    loglik = next;
    q.swap(q_next);
    if (change < cfg.tol) {
      converged = true;
      break;
    }
  }

  result.spec = spec;
  result.w_names = data.w_names();
  result.z_names = data.z_names();
  result.params.unpack(b, spec);
  result.params.baseline.times = ws.times();
  result.params.baseline.jumps = std::move(jumps);
  result.posteriors = ws.from_sorted(q);
  result.loglik = loglik;
  result.iters = iter;
  result.converged = converged;
  return result;
}

FitResult fit_multigene(const Dataset& data, const ModelSpec& spec, const EmConfig& cfg) {
  if (!data.two_gene()) throw ValidationError("fit_multigene requires 4-entry configuration probabilities");
  if (!spec.second_gene) throw ValidationError("fit_multigene requires a second-gene basis");
  return fit(data, spec, cfg);
}

}  // namespace kinrisk
