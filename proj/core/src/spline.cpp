#include "kinrisk/spline.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "kinrisk/errors.hpp"
#include "kinrisk/stats.hpp"

namespace kinrisk {

SplineBasis SplineBasis::constant() { return SplineBasis(); }

SplineBasis::SplineBasis(int degree, std::vector<double> interior_knots, double t_min, double t_max)
    : constant_(false), degree_(degree), interior_(std::move(interior_knots)), t_min_(t_min), t_max_(t_max) {
  if (degree_ < 0) throw ValidationError("spline degree must be non-negative");
  if (!(std::isfinite(t_min_) && std::isfinite(t_max_) && t_min_ < t_max_)) {
    throw ValidationError("spline boundary must satisfy t_min < t_max");
  }
  double prev = t_min_;
  for (double k : interior_) {
    if (!(k > prev && k < t_max_)) {
      throw ValidationError("interior knots must be strictly increasing and inside (t_min, t_max)");
    }
    prev = k;
  }
  knots_.assign(static_cast<std::size_t>(degree_) + 1, t_min_);
  knots_.insert(knots_.end(), interior_.begin(), interior_.end());
  knots_.insert(knots_.end(), static_cast<std::size_t>(degree_) + 1, t_max_);
}

std::size_t SplineBasis::size() const noexcept {
  return constant_ ? 1 : interior_.size() + static_cast<std::size_t>(degree_) + 1;
}

std::vector<double> SplineBasis::eval(double t) const {
  std::vector<double> out(size());
  eval(t, out);
  return out;
}

void SplineBasis::eval(double t, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  if (constant_) {
    out[0] = 1.0;
    return;
  }
  const double x = std::clamp(t, t_min_, t_max_);
  const auto p = static_cast<std::size_t>(degree_);
  const std::size_t n_basis = size();

  // Knot span: knots_[span] <= x < knots_[span + 1], with the right end folded
  // into the last non-empty span.
  std::size_t span = n_basis - 1;
  if (x < t_max_) {
    const auto it = std::upper_bound(knots_.begin() + static_cast<std::ptrdiff_t>(p),
                                     knots_.begin() + static_cast<std::ptrdiff_t>(n_basis) + 1, x);
    span = static_cast<std::size_t>(it - knots_.begin()) - 1;
  }

  // Cox-de Boor triangle for the p + 1 non-zero functions on the span.
  std::vector<double> values(p + 1, 0.0);
  std::vector<double> left(p + 1, 0.0);
  std::vector<double> right(p + 1, 0.0);
  values[0] = 1.0;
  for (std::size_t j = 1; j <= p; ++j) {
    left[j] = x - knots_[span + 1 - j];
    right[j] = knots_[span + j] - x;
    double saved = 0.0;
    for (std::size_t r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double tmp = denom > 0.0 ? values[r] / denom : 0.0;
      values[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    values[j] = saved;
  }
  for (std::size_t j = 0; j <= p; ++j) out[span - p + j] = values[j];
}

SplineBasis place_knots(std::span<const double> event_times, int n_knots, int degree,
                        std::optional<std::pair<double, double>> boundary) {
  if (event_times.empty()) throw ValidationError("place_knots: no event times");
  if (n_knots < 0) throw ValidationError("place_knots: negative knot count");
  if (degree < 1 || degree > 3) throw ValidationError("place_knots: degree must be 1, 2 or 3");

  std::vector<double> sorted(event_times.begin(), event_times.end());
  std::sort(sorted.begin(), sorted.end());
  const std::set<double> distinct(sorted.begin(), sorted.end());
  if (distinct.size() < static_cast<std::size_t>(n_knots)) {
    throw ValidationError("place_knots: fewer distinct event times than requested knots");
  }

  const auto [t_min, t_max] = boundary.value_or(std::make_pair(sorted.front(), sorted.back()));
  std::vector<double> interior;
  for (int k = 1; k <= n_knots; ++k) {
    interior.push_back(quantile_type7(sorted, static_cast<double>(k) / (n_knots + 1)));
  }
  return SplineBasis(degree, std::move(interior), t_min, t_max);
}

}  // namespace kinrisk
