#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robustrisk/error.hpp"
#include "robustrisk/numeric.hpp"

namespace robustrisk {

/// Convex generator f of an f-divergence E[f(dQ/dP)], with f(1) = 0, and the
/// calculus needed to build worst-case densities: f', f'', the inverse g of
/// f' on (a, inf), and a = f'(0+).
struct Divergence {
    enum class Kind { kl, scaled_kl, chi_squared, custom };

    std::string name;
    Kind kind = Kind::custom;
    std::function<double(double)> f;
    std::function<double(double)> f_prime;
    std::function<double(double)> f_second;
    std::function<double(double)> g;
    double a = -std::numeric_limits<double>::infinity();
    /// ln g(y) for exponential-type g; used to guard against overflow.
    std::function<double(double)> log_g;
    /// d when x f''(x) = d is constant (the KL family).
    std::optional<double> xf2_constant;

    bool is_kl_family() const { return xf2_constant.has_value(); }
};

namespace divergences {

/// f(x) = d x ln x; d = 1 is Kullback-Leibler.
inline Divergence scaled_kl(double d) {
    if (!(d > 0.0) || !std::isfinite(d))
        throw ArgumentError("scaled_kl: d must be positive");
    Divergence div;
    div.name = d == 1.0 ? "kl" : "scaled_kl(" + std::to_string(d) + ")";
    div.kind = d == 1.0 ? Divergence::Kind::kl : Divergence::Kind::scaled_kl;
    div.f = [d](double x) { return x > 0.0 ? d * x * std::log(x) : 0.0; };
    div.f_prime = [d](double x) { return d * (std::log(x) + 1.0); };
    div.f_second = [d](double x) { return d / x; };
    div.g = [d](double y) { return std::exp(y / d - 1.0); };
    div.log_g = [d](double y) { return y / d - 1.0; };
    div.a = -std::numeric_limits<double>::infinity();
    div.xf2_constant = d;
    return div;
}

inline Divergence kl() { return scaled_kl(1.0); }

/// f(x) = (x - 1)^2. Range of f' is (-2, inf), so worst-case weights can be 0.
inline Divergence chi_squared() {
    Divergence div;
    div.name = "chi2";
    div.kind = Divergence::Kind::chi_squared;
    div.f = [](double x) { return (x - 1.0) * (x - 1.0); };
    div.f_prime = [](double x) { return 2.0 * (x - 1.0); };
    div.f_second = [](double) { return 2.0; };
    div.g = [](double y) { return 1.0 + 0.5 * y; };
    div.a = -2.0;
    return div;
}

} // namespace divergences

/// Largest permitted exponent inside g before it is reported as overflow.
inline constexpr double kMaxExponent = 700.0;

/// z(x) = g(theta (x - c)) on I_c = (a/theta + c, inf), 0 elsewhere. The
/// boundary of I_c is treated as outside.
inline double z_of_loss(const Divergence& div, double theta, double c, double x) {
    if (!(theta > 0.0))
        throw ArgumentError("z_of_loss: theta must be positive");
    const double y = theta * (x - c);
    if (!(y > div.a))
        return 0.0;
    if (div.log_g) {
        const double e = div.log_g(y);
        if (e > kMaxExponent)
            throw OverflowError("z_of_loss: exponent " + std::to_string(e) +
                                    " overflows; shift c towards the losses",
                                e);
    }
    const double z = div.g(y);
    if (!std::isfinite(z) || z < 0.0)
        throw OverflowError("z_of_loss: g returned " + std::to_string(z), y);
    return z;
}

/// g'(y) = 1 / f''(g(y)) on I_c, 0 outside.
inline double g_prime(const Divergence& div, double y) {
    if (!(y > div.a))
        return 0.0;
    return 1.0 / div.f_second(div.g(y));
}

/// Sample estimate of E[f(Z)] for density weights Z under `probs` (uniform
/// when empty). Weights must be nonnegative and average to 1 within 1e-6.
inline double divergence_of_weights(const Divergence& div, std::span<const double> weights,
                                    std::span<const double> probs = {}) {
    if (weights.empty())
        throw ArgumentError("divergence_of_weights: empty weight vector");
    std::vector<double> fw(weights.size());
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] < 0.0 || !std::isfinite(weights[i]))
            throw ArgumentError("divergence_of_weights: weight " + std::to_string(i) +
                                " is negative or non-finite");
        fw[i] = div.f(weights[i]);
    }
    const double mean = expectation(weights, probs);
    if (std::abs(mean - 1.0) > 1e-6)
        throw ArgumentError("divergence_of_weights: weights average to " + std::to_string(mean) +
                            ", not 1");
    return expectation(fw, probs);
}

} // namespace robustrisk
