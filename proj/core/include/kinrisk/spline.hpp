#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace kinrisk {

// B-spline sieve for a time-varying log hazard ratio beta(t) = sum_j alpha_j phi_j(t).
//
// The knot vector is clamped: both boundary knots are repeated degree + 1
// times, so the basis has interior_knots.size() + degree + 1 functions and
// forms a partition of unity on [t_min, t_max]. Arguments outside the
// boundary are clamped to it. The constant basis (a single function equal to
// one everywhere) represents the time-invariant proportional hazards model.
class SplineBasis {
public:
  static SplineBasis constant();

  SplineBasis(int degree, std::vector<double> interior_knots, double t_min, double t_max);

  bool is_constant() const noexcept { return constant_; }
  int degree() const noexcept { return degree_; }
  const std::vector<double>& interior_knots() const noexcept { return interior_; }
  double t_min() const noexcept { return t_min_; }
  double t_max() const noexcept { return t_max_; }

  // Basis dimension K_n.
  std::size_t size() const noexcept;

  std::vector<double> eval(double t) const;
  // out.size() must equal size().
  void eval(double t, std::span<double> out) const;

  bool operator==(const SplineBasis&) const = default;

private:
  SplineBasis() = default;

  bool constant_ = true;
  int degree_ = 0;
  std::vector<double> interior_;
  double t_min_ = 0.0;
  double t_max_ = 0.0;
  std::vector<double> knots_;  // full clamped knot vector
};

// Interior knots at the type-7 quantiles k / (n_knots + 1) of the event times.
// The boundary defaults to [min, max] of event_times; callers normally pass
// the range of all observed times.
SplineBasis place_knots(std::span<const double> event_times, int n_knots, int degree,
                        std::optional<std::pair<double, double>> boundary = std::nullopt);

}  // namespace kinrisk
