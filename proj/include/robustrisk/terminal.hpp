#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "robustrisk/calibration.hpp"
#include "robustrisk/divergence.hpp"
#include "robustrisk/numeric.hpp"
#include "robustrisk/random.hpp"
#include "robustrisk/sample.hpp"

namespace robustrisk {

/// Quantities at t = 0 for one uncertainty-aversion parameter theta.
struct RobustResult {
    std::string divergence;
    double theta = 0.0;
    double c = 0.0;
    double U0 = 0.0;      ///< value: worst-case loss net of the divergence penalty
    double V0 = 0.0;      ///< worst-case expected loss
    double eta0 = 0.0;    ///< divergence budget, E f(Z*(T))
    double nominal = 0.0; ///< E l(T) under the reference model
    double M0 = 0.0;      ///< E[Z f'(Z) - f(Z)]; U0 = M0 / theta + c
    std::size_t n_samples = 0;
    double std_err_U0 = 0.0;
    double std_err_V0 = 0.0;
    double std_err_eta0 = 0.0;
    double std_err_nominal = 0.0;
    /// Relative gap between U0 and the KL closed form ln E e^{theta l} / theta;
    /// NaN for other divergences.
    double u0_route_gap = std::numeric_limits<double>::quiet_NaN();
    CalibrationResult calibration;
};

/// Z(T)_i = z(l_i) for a calibrated c.
inline std::vector<double> worst_case_weights(const Divergence& div, double theta, double c,
                                              const LossSample& losses) {
    const auto v = losses.values();
    std::vector<double> w(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        w[i] = z_of_loss(div, theta, c, v[i]);
    return w;
}

namespace detail {

inline double influence_se(std::span<const double> influence) {
    return standard_error(influence);
}

} // namespace detail

/// Worst-case expected loss, value and budget at t = 0.
///
/// Standard errors (Monte Carlo samples only; zero for atoms) come from the
/// delta method. The value U0 = c + E[psi]/theta is stationary in c, so its
/// influence is psi_i = Z_i f'(Z_i) - f(Z_i). For V0 the sensitivity of c to
/// the sample enters through E[g' l] / E[g'].
inline RobustResult measure_at_zero(const LossSample& losses, const Divergence& div, double theta,
                                    double tol = kDefaultCalibrationTol) {
    RobustResult r;
    r.divergence = div.name;
    r.theta = theta;
    r.calibration = solve_c(div, theta, losses, tol);
    r.c = r.calibration.c;
    r.n_samples = losses.size();

    const auto l = losses.values();
    const std::size_t n = l.size();
    const auto w = worst_case_weights(div, theta, r.c, losses);
    const double f0 = div.f(0.0);

    std::vector<double> wl(n), m(n);
    for (std::size_t i = 0; i < n; ++i) {
        wl[i] = w[i] * l[i];
        m[i] = w[i] > 0.0 ? w[i] * div.f_prime(w[i]) - div.f(w[i]) : -f0;
    }
    r.nominal = losses.mean();
    r.V0 = losses.expect(wl);
    r.eta0 = divergence_of_weights(div, w, losses.probs());
    r.U0 = r.V0 - r.eta0 / theta;
    r.M0 = losses.expect(m);

    if (div.kind == Divergence::Kind::kl) {
        std::vector<double> tl(l.begin(), l.end());
        for (double& x : tl)
            x *= theta;
        const double closed = log_mean_exp(tl, losses.probs()) / theta;
        r.u0_route_gap = std::abs(r.U0 - closed) / std::max(1.0, std::abs(closed));
    }

    if (!losses.is_atomic() && n > 1) {
        std::vector<double> gp(n), gpl(n);
        for (std::size_t i = 0; i < n; ++i) {
            gp[i] = g_prime(div, theta * (l[i] - r.c));
            gpl[i] = gp[i] * l[i];
        }
        const double mean_gp = losses.expect(gp);
        const double kappa = mean_gp > 0.0 ? losses.expect(gpl) / mean_gp : 0.0;
        std::vector<double> if_u(n), if_v(n), if_eta(n);
        for (std::size_t i = 0; i < n; ++i) {
            if_u[i] = (m[i] - r.M0) / theta;
            if_v[i] = wl[i] - r.V0 - kappa * (w[i] - 1.0);
            if_eta[i] = theta * (if_v[i] - if_u[i]);
        }
        r.std_err_U0 = detail::influence_se(if_u);
        r.std_err_V0 = detail::influence_se(if_v);
        r.std_err_eta0 = detail::influence_se(if_eta);
        r.std_err_nominal = standard_error(l);
    }
    return r;
}

struct SweepEntry {
    double theta = 0.0;
    std::optional<RobustResult> result;
    std::string error; ///< calibration failure for this theta, if any
};

/// measure_at_zero along an ascending theta grid on a common sample.
inline std::vector<SweepEntry> theta_sweep(const LossSample& losses, const Divergence& div,
                                           std::span<const double> theta_grid,
                                           double tol = kDefaultCalibrationTol) {
    if (theta_grid.empty())
        throw ArgumentError("theta_sweep: empty theta grid");
    for (std::size_t i = 0; i < theta_grid.size(); ++i) {
        if (!(theta_grid[i] > 0.0) || !std::isfinite(theta_grid[i]))
            throw ArgumentError("theta_sweep: theta values must be positive");
        if (i > 0 && !(theta_grid[i] > theta_grid[i - 1]))
            throw ArgumentError("theta_sweep: theta grid must be strictly ascending");
    }
    std::vector<SweepEntry> out;
    out.reserve(theta_grid.size());
    for (double th : theta_grid) {
        SweepEntry e;
        e.theta = th;
        try {
            e.result = measure_at_zero(losses, div, th, tol);
        } catch (const Error& err) {
            e.error = err.what();
        }
        out.push_back(std::move(e));
    }
    return out;
}

enum class ProbeFamily { worst_case, uniform, tilt, mixture, perturbed_uniform, perturbed_worst };

inline const char* to_string(ProbeFamily f) {
    switch (f) {
    case ProbeFamily::worst_case:
        return "worst_case";
    case ProbeFamily::uniform:
        return "uniform";
    case ProbeFamily::tilt:
        return "tilt";
    case ProbeFamily::mixture:
        return "mixture";
    case ProbeFamily::perturbed_uniform:
        return "perturbed_uniform";
    default:
        return "perturbed_worst";
    }
}

struct ProbeRecord {
    std::size_t trial = 0;
    ProbeFamily family = ProbeFamily::uniform;
    double divergence = 0.0;
    double value = 0.0;
    bool feasible = false;
};

struct ProbeReport {
    std::size_t n_trials = 0;
    std::size_t n_feasible = 0;
    double V0 = 0.0;
    double eta_star = 0.0;
    double bound = 0.0;          ///< V0 + 3 SE (+ rounding allowance)
    double max_value = -INFINITY; ///< largest feasible probed value
    double slack = 0.0;          ///< bound - max_value
    double equality_gap = 0.0;   ///< |value of the worst-case weights - V0|
    std::vector<ProbeRecord> records;
    std::vector<ProbeRecord> violations;
    bool passed() const { return violations.empty(); }
};

/// Draws candidate densities and checks that none inside the divergence
/// ball of radius eta0 beats V0 by more than 3 standard errors. Trials 0 and
/// 1 are the worst-case weights and the nominal (uniform) weights; the rest
/// cycle through optimal densities at smaller theta, mixtures of the
/// worst-case weights with uniform, and bounded random log-perturbations.
inline ProbeReport feasible_measure_probe(const LossSample& losses, const Divergence& div,
                                          const RobustResult& result, std::size_t n_trials,
                                          std::uint64_t seed) {
    const double theta = result.theta;
    const auto l = losses.values();
    const std::size_t n = l.size();
    const auto w_star = worst_case_weights(div, theta, result.c, losses);

    ProbeReport rep;
    rep.n_trials = n_trials;
    rep.V0 = result.V0;
    rep.eta_star = result.eta0;
    rep.bound = result.V0 + 3.0 * result.std_err_V0 + 1e-12 * (1.0 + std::abs(result.V0));
    const double eta_cap = result.eta0 * (1.0 + 1e-12) + 1e-15;

    auto evaluate = [&](std::vector<double>& w, std::size_t trial, ProbeFamily fam) {
        const double mean = losses.expect(w);
        for (double& x : w)
            x /= mean;
        ProbeRecord rec;
        rec.trial = trial;
        rec.family = fam;
        rec.divergence = divergence_of_weights(div, w, losses.probs());
        std::vector<double> wl(n);
        for (std::size_t i = 0; i < n; ++i)
            wl[i] = w[i] * l[i];
        rec.value = losses.expect(wl);
        rec.feasible = rec.divergence <= eta_cap;
        if (rec.feasible) {
            ++rep.n_feasible;
            rep.max_value = std::max(rep.max_value, rec.value);
            if (rec.value > rep.bound)
                rep.violations.push_back(rec);
        }
        rep.records.push_back(rec);
        return rec;
    };

    auto uniform = [&](std::size_t trial, std::uint32_t slot) {
        return random::uniform_pair(seed, trial, slot, 0)[0];
    };

    for (std::size_t t = 0; t < n_trials; ++t) {
        std::vector<double> w;
        ProbeFamily fam;
        if (t == 0) {
            fam = ProbeFamily::worst_case;
            w = w_star;
        } else if (t == 1) {
            fam = ProbeFamily::uniform;
            w.assign(n, 1.0);
        } else {
            const double u = uniform(t, 0);
            switch ((t - 2) % 4) {
            case 0: {
                fam = ProbeFamily::tilt;
                const double th = theta * std::min(u, 1.0 - 1e-9);
                try {
                    const auto cal = solve_c(div, th, losses);
                    w = worst_case_weights(div, th, cal.c, losses);
                } catch (const Error&) {
                    continue;
                }
                break;
            }
            case 1:
                fam = ProbeFamily::mixture;
                w.resize(n);
                for (std::size_t i = 0; i < n; ++i)
                    w[i] = u * w_star[i] + (1.0 - u);
                break;
            default: {
                const bool around_uniform = (t - 2) % 4 == 2;
                fam = around_uniform ? ProbeFamily::perturbed_uniform : ProbeFamily::perturbed_worst;
                const double amp = (around_uniform ? 2.0 : 0.25) * u * std::sqrt(2.0 * result.eta0);
                w.resize(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const double xi = random::normal_pair(seed, t, static_cast<std::uint32_t>(i), 1)[0];
                    const double e = std::exp(std::clamp(amp * xi, -5.0, 5.0));
                    w[i] = (around_uniform ? 1.0 : w_star[i]) * e;
                }
                break;
            }
            }
        }
        const auto rec = evaluate(w, t, fam);
        if (fam == ProbeFamily::worst_case)
            rep.equality_gap = std::abs(rec.value - result.V0);
    }
    rep.slack = rep.bound - rep.max_value;
    return rep;
}

} // namespace robustrisk
