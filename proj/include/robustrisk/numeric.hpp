#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "robustrisk/error.hpp"

namespace robustrisk {

/// Pairwise (cascade) summation. The reduction tree depends only on the
/// length of the input, so results never depend on thread scheduling.
inline double pairwise_sum(std::span<const double> x) {
    constexpr std::size_t block = 64;
    if (x.size() <= block) {
        double s = 0.0;
        for (double v : x)
            s += v;
        return s;
    }
    const std::size_t half = x.size() / 2;
    return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

/// Expectation of `values` under `probs`; uniform weights when `probs` is empty.
inline double expectation(std::span<const double> values, std::span<const double> probs) {
    if (values.empty())
        throw ArgumentError("expectation of an empty sample");
    if (probs.empty())
        return pairwise_sum(values) / static_cast<double>(values.size());
    if (probs.size() != values.size())
        throw ArgumentError("probability vector length does not match sample length");
    std::vector<double> prod(values.size());
    for (std::size_t i = 0; i < values.size(); ++i)
        prod[i] = probs[i] * values[i];
    return pairwise_sum(prod);
}

/// ln E[exp(x)] under `probs` (uniform when empty), computed with the max shift.
inline double log_mean_exp(std::span<const double> x, std::span<const double> probs) {
    if (x.empty())
        throw ArgumentError("log_mean_exp of an empty sample");
    const double m = *std::max_element(x.begin(), x.end());
    if (!std::isfinite(m))
        throw ArgumentError("log_mean_exp: non-finite input");
    std::vector<double> e(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        e[i] = std::exp(x[i] - m);
    return m + std::log(expectation(e, probs));
}

/// Sample variance (n-1 denominator) with a two-pass pairwise mean.
inline double sample_variance(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2)
        return 0.0;
    const double mean = pairwise_sum(x) / static_cast<double>(n);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i)
        sq[i] = (x[i] - mean) * (x[i] - mean);
    return pairwise_sum(sq) / static_cast<double>(n - 1);
}

/// Standard error of the mean of `x`.
inline double standard_error(std::span<const double> x) {
    if (x.size() < 2)
        return 0.0;
    return std::sqrt(sample_variance(x) / static_cast<double>(x.size()));
}

inline bool all_finite(std::span<const double> x) {
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

} // namespace robustrisk
