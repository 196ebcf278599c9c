#pragma once

#include <cstddef>
#include <limits>

namespace cvrace::stats {

inline constexpr double kInfiniteDf = std::numeric_limits<double>::infinity();

// Degrees of freedom at or above this use the df = infinity form.
inline constexpr double kLargeDf = 1e4;

// P(range of m iid standard normals <= w).
[[nodiscard]] double normal_range_cdf(double w, std::size_t m);

// Upper tail P(Q_{m,df} > q) of the studentized range.
[[nodiscard]] double studentized_range_upper(double q, std::size_t m, double df);

// P(Q_{m,df} <= q). df may be kInfiniteDf.
[[nodiscard]] double studentized_range_cdf(double q, std::size_t m, double df);

// q with P(Q_{m,df} <= q) = 1 - alpha, to 1e-6 in probability or better.
// Throws NumericalError when the root cannot be located to that tolerance.
[[nodiscard]] double studentized_range_quantile(double alpha, std::size_t m, double df);

} // namespace cvrace::stats
