#pragma once

#include <filesystem>
#include <iosfwd>

#include "kinrisk/em_engine.hpp"

namespace kinrisk {

// JSON document with fields
//   format, coefficients [{name, value}], basis {constant, degree, interior_knots, boundary},
//   second_basis (optional), interaction, w_names, z_names,
//   baseline [[time, jump], ...], loglik, loglik_trace, iters, converged,
//   posteriors {n_configs, values (row-major)}.
// Doubles are written with round-trip precision, so read_fit(write_fit(f)) == f.
void write_fit(std::ostream& out, const FitResult& fit);
void write_fit(const std::filesystem::path& path, const FitResult& fit);

FitResult read_fit(std::istream& in);
FitResult read_fit(const std::filesystem::path& path);

}  // namespace kinrisk
