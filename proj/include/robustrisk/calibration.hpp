#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "robustrisk/divergence.hpp"
#include "robustrisk/error.hpp"
#include "robustrisk/numeric.hpp"
#include "robustrisk/sample.hpp"

namespace robustrisk {

enum class CalibrationMethod { automatic, closed_form_kl, bisection };

inline const char* to_string(CalibrationMethod m) {
    switch (m) {
    case CalibrationMethod::closed_form_kl:
        return "closed_form_kl";
    case CalibrationMethod::bisection:
        return "bisection";
    default:
        return "automatic";
    }
}

struct CalibrationResult {
    double c = 0.0;
    double theta = 0.0;
    double residual = 0.0; ///< |K(c) - 1|
    int iterations = 0;
    CalibrationMethod method = CalibrationMethod::bisection;
};

inline constexpr double kDefaultCalibrationTol = 1e-10;

/// K(c) = E[z(l)] over the sample, z(x) = g(theta (x - c)) 1{x in I_c}.
/// Non-increasing in c.
inline double normalization_K(const Divergence& div, double theta, double c,
                              const LossSample& losses) {
    const auto v = losses.values();
    std::vector<double> z(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        z[i] = z_of_loss(div, theta, c, v[i]);
    return losses.expect(z);
}

/// Normalization constant c with |K(c) - 1| <= tol.
inline CalibrationResult solve_c(const Divergence& div, double theta, const LossSample& losses,
                                 double tol = kDefaultCalibrationTol,
                                 CalibrationMethod method = CalibrationMethod::automatic) {
    if (!(theta > 0.0) || !std::isfinite(theta))
        throw ArgumentError("solve_c: theta must be positive and finite");
    if (!(tol > 0.0))
        throw ArgumentError("solve_c: tol must be positive");
    if (method == CalibrationMethod::closed_form_kl && div.kind != Divergence::Kind::kl)
        throw ArgumentError("solve_c: closed form requires the KL divergence");

    CalibrationResult res;
    res.theta = theta;

    if (method == CalibrationMethod::closed_form_kl ||
        (method == CalibrationMethod::automatic && div.kind == Divergence::Kind::kl)) {
        // E exp(theta (l - c) - 1) = 1  <=>  c = (ln E exp(theta l) - 1) / theta
        std::vector<double> tl(losses.values().begin(), losses.values().end());
        for (double& x : tl)
            x *= theta;
        if (!all_finite(tl))
            throw CalibrationError("solve_c: theta * loss overflows for theta=" +
                                   std::to_string(theta));
        res.c = (log_mean_exp(tl, losses.probs()) - 1.0) / theta;
        res.residual = std::abs(normalization_K(div, theta, res.c, losses) - 1.0);
        res.iterations = 0;
        res.method = CalibrationMethod::closed_form_kl;
        if (!(res.residual <= tol))
            throw CalibrationError("solve_c: closed-form residual " + std::to_string(res.residual) +
                                   " exceeds tolerance");
        return res;
    }

    // Overflow means K is astronomically large, i.e. c is far too small.
    auto k_of = [&](double c) {
        try {
            return normalization_K(div, theta, c, losses);
        } catch (const OverflowError&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    const double centre = losses.mean() - div.f_prime(1.0) / theta;
    double step = std::max(losses.max() - losses.min(), 1.0 / theta);
    double lo = centre - step;
    double hi = centre + step;
    double k_lo = k_of(lo);
    double k_hi = k_of(hi);
    int doublings = 0;
    while (!(k_lo >= 1.0 && k_hi <= 1.0)) {
        if (++doublings > 200)
            throw CalibrationError("solve_c: no bracket for K(c) = 1 after 200 doublings (" +
                                   div.name + ", theta=" + std::to_string(theta) + ")");
        step *= 2.0;
        if (!(k_lo >= 1.0)) {
            lo -= step;
            k_lo = k_of(lo);
        }
        if (!(k_hi <= 1.0)) {
            hi += step;
            k_hi = k_of(hi);
        }
    }

    double best_c = std::abs(k_lo - 1.0) <= std::abs(k_hi - 1.0) ? lo : hi;
    double best_r = std::min(std::abs(k_lo - 1.0), std::abs(k_hi - 1.0));
    int it = 0;
    while (best_r > tol && it < 200) {
        const double mid = lo + 0.5 * (hi - lo);
        if (mid <= lo || mid >= hi)
            break;
        ++it;
        const double k_mid = k_of(mid);
        const double r = std::abs(k_mid - 1.0);
        if (r < best_r) {
            best_r = r;
            best_c = mid;
        }
        if (k_mid > 1.0)
            lo = mid;
        else
            hi = mid;
    }
    if (!(best_r <= tol))
        throw CalibrationError("solve_c: bisection stalled with residual " +
                               std::to_string(best_r) + " (K(c) jumps across 1)");
    res.c = best_c;
    res.residual = best_r;
    res.iterations = it;
    res.method = CalibrationMethod::bisection;
    return res;
}

} // namespace robustrisk
