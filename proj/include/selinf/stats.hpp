#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace selinf {

// Inverse of the standard normal CDF.
double normal_quantile(double prob);

// Two-sided critical value z_{1 - (1 - level)/2}.
double normal_critical(double level);

// Empirical quantile with linear interpolation between order statistics
// (Hyndman-Fan type 7). `sorted` must be ascending and non-empty.
double quantile_type7(std::span<const double> sorted, double prob);

using Rng = std::mt19937_64;

// Seed for replicate `index` of a run seeded with `master`. Pure function of
// its arguments so that results never depend on scheduling.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept;

} // namespace selinf
