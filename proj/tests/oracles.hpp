#pragma once

// Independent reference values for the tests. Nothing here calls the library.

#include <cmath>
#include <functional>

namespace oracle {

/// Maximizes f on [lo, hi] by golden-section search.
inline double golden_max(const std::function<double(double)>& f, double lo, double hi,
                         double tol = 1e-14) {
    const double r = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double x1 = b - r * (b - a), x2 = a + r * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

/// Worst case over all laws on the atoms {0, 1} for a nominal law (1/2, 1/2):
/// maximize q - D(q) / theta where Q puts mass q on the loss 1.
struct TwoPoint {
    double q, U0, V0, eta0;
};

inline TwoPoint two_point(const std::function<double(double)>& divergence_of_q, double theta) {
    auto objective = [&](double q) { return q - divergence_of_q(q) / theta; };
    const double q = golden_max(objective, 1e-15, 1.0 - 1e-15);
    return {q, objective(q), q, divergence_of_q(q)};
}

/// Discrete KL of (1 - q, q) against (1/2, 1/2).
inline double kl_two_point(double q) {
    auto term = [](double p) { return p > 0.0 ? p * std::log(2.0 * p) : 0.0; };
    return term(q) + term(1.0 - q);
}

/// E_P[(dQ/dP - 1)^2] for the same pair.
inline double chi2_two_point(double q) {
    const double w1 = 2.0 * q, w0 = 2.0 * (1.0 - q);
    return 0.5 * (w0 - 1.0) * (w0 - 1.0) + 0.5 * (w1 - 1.0) * (w1 - 1.0);
}

/// KL worst case for l = X(T) with X arithmetic Brownian motion: tilting
/// N(m, s^2) by e^{theta x} shifts the mean by theta s^2.
struct Gaussian {
    double U, V, eta;
};

inline Gaussian gaussian_kl(double mu, double sigma, double t_remaining, double theta, double x = 0.0) {
    const double m = x + mu * t_remaining, s2 = sigma * sigma * t_remaining;
    return {m + 0.5 * theta * s2, m + theta * s2, 0.5 * theta * theta * s2};
}

} // namespace oracle
