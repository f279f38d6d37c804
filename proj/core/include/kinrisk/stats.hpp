#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace kinrisk {

// Linear interpolation between order statistics (Hyndman-Fan type 7).
// `sorted` must be ascending and non-empty; p in [0, 1].
double quantile_type7(std::span<const double> sorted, double p);

// Convenience: sorts a copy first.
double quantile_type7_unsorted(std::span<const double> values, double p);

double mean(std::span<const double> values);

// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_sd(std::span<const double> values);

double normal_cdf(double x);
double normal_quantile(double p);

// Deterministic 64-bit generator for stream `stream` of a run seeded with `seed`.
// Streams with different indices are statistically independent.
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0);

}  // namespace kinrisk
