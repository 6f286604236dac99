#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "robustrisk/error.hpp"
#include "robustrisk/timegrid.hpp"

namespace robustrisk {

using StatePayoff = std::function<double(std::span<const double>)>;
using ScalarField = std::function<double(double, std::span<const double>)>;
using VectorField = std::function<void(double, std::span<const double>, std::span<double>)>;

/// l(t) = 0 for t < T, l(T) = payoff(X(T)).
struct TerminalLoss {
    StatePayoff payoff;
};

/// l(t) = h0(t, X(t)) + int_0^t h1(s, X(s)) ds + int_0^t h(s, X(s)) . dX(s).
/// Empty callbacks are treated as zero.
struct IntegralFormLoss {
    ScalarField h0;
    ScalarField h1;
    VectorField h;
};

/// l(t) = max_{s <= t} payoff(X(s)).
struct RunningMaxLoss {
    StatePayoff payoff;
};

/// l(t_0) = initial, l(t_{k+1}) = step(t_k, X_k, X_{k+1}, l(t_k)).
struct CustomFoldLoss {
    double initial = 0.0;
    std::function<double(double, std::span<const double>, std::span<const double>, double)> step;
};

/// A non-anticipative cumulative loss functional.
struct LossSpec {
    std::string name;
    std::variant<TerminalLoss, IntegralFormLoss, RunningMaxLoss, CustomFoldLoss> form;

    bool is_integral_form() const { return std::holds_alternative<IntegralFormLoss>(form); }
};

/// Running sums of the dt- and dX-integrals of an integral-form loss.
struct RunningIntegrals {
    std::vector<double> dt_part;
    std::vector<double> dx_part;
};

namespace detail {

inline void check_finite(double v, std::size_t k, const char* what) {
    if (!std::isfinite(v))
        throw EvaluationError(std::string("loss evaluation: non-finite ") + what + " at step " +
                                  std::to_string(k),
                              k);
}

} // namespace detail

/// Left-point (Ito) sums of int h1 dt and int h dX along the path, one entry
/// per node. Both start at 0.
inline RunningIntegrals running_integrals(const IntegralFormLoss& loss, const PathView& path) {
    const std::size_t n = path.n_nodes();
    const std::size_t d = path.dim();
    const TimeGrid& grid = path.grid();
    RunningIntegrals out{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    std::vector<double> hv(d);
    double a = 0.0, b = 0.0;
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const double t = grid.node(k);
        const auto xk = path.state(k);
        if (loss.h1) {
            const double v = loss.h1(t, xk);
            detail::check_finite(v, k, "h1");
            a += v * grid.step(k);
        }
        if (loss.h) {
            loss.h(t, xk, hv);
            const auto xn = path.state(k + 1);
            for (std::size_t j = 0; j < d; ++j) {
                detail::check_finite(hv[j], k, "h");
                b += hv[j] * (xn[j] - xk[j]);
            }
        }
        detail::check_finite(a + b, k, "running integral");
        out.dt_part[k + 1] = a;
        out.dx_part[k + 1] = b;
    }
    return out;
}

/// l(t_k, path) for every node k.
inline std::vector<double> evaluate_running(const LossSpec& loss, const PathView& path) {
    const std::size_t n = path.n_nodes();
    const TimeGrid& grid = path.grid();
    std::vector<double> out(n, 0.0);
    std::visit(
        [&](const auto& form) {
            using T = std::decay_t<decltype(form)>;
            if constexpr (std::is_same_v<T, TerminalLoss>) {
                const double v = form.payoff(path.state(n - 1));
                detail::check_finite(v, n - 1, "terminal payoff");
                out[n - 1] = v;
            } else if constexpr (std::is_same_v<T, IntegralFormLoss>) {
                const auto ri = running_integrals(form, path);
                for (std::size_t k = 0; k < n; ++k) {
                    const double h0 = form.h0 ? form.h0(grid.node(k), path.state(k)) : 0.0;
                    detail::check_finite(h0, k, "h0");
                    out[k] = h0 + ri.dt_part[k] + ri.dx_part[k];
                }
            } else if constexpr (std::is_same_v<T, RunningMaxLoss>) {
                double m = -INFINITY;
                for (std::size_t k = 0; k < n; ++k) {
                    const double v = form.payoff(path.state(k));
                    detail::check_finite(v, k, "payoff");
                    m = std::max(m, v);
                    out[k] = m;
                }
            } else {
                double acc = form.initial;
                detail::check_finite(acc, 0, "fold accumulator");
                out[0] = acc;
                for (std::size_t k = 0; k + 1 < n; ++k) {
                    acc = form.step(grid.node(k), path.state(k), path.state(k + 1), acc);
                    detail::check_finite(acc, k, "fold accumulator");
                    out[k + 1] = acc;
                }
            }
        },
        loss.form);
    return out;
}

/// l(T, path); always equal to the last element of evaluate_running.
inline double evaluate_terminal(const LossSpec& loss, const PathView& path) {
    if (const auto* t = std::get_if<TerminalLoss>(&loss.form)) {
        const double v = t->payoff(path.state(path.n_nodes() - 1));
        detail::check_finite(v, path.n_nodes() - 1, "terminal payoff");
        return v;
    }
    return evaluate_running(loss, path).back();
}

/// Terminal losses of every path in the batch.
inline std::vector<double> terminal_losses(const LossSpec& loss, const PathBatch& batch,
                                           unsigned threads = 1) {
    std::vector<double> out(batch.n_paths());
    detail::parallel_for(batch.n_paths(), threads,
                         [&](std::size_t i) { out[i] = evaluate_terminal(loss, batch.path(i)); });
    return out;
}

/// The integral-form view of a loss when one exists: integral forms as-is,
/// terminal losses as h0(t, x) = payoff(x) with h1 = h = 0. Only the terminal
/// value and running integrals of the result are meaningful for terminal losses.
inline std::optional<IntegralFormLoss> as_integral_form(const LossSpec& loss) {
    if (const auto* f = std::get_if<IntegralFormLoss>(&loss.form))
        return *f;
    if (const auto* t = std::get_if<TerminalLoss>(&loss.form)) {
        IntegralFormLoss out;
        out.h0 = [payoff = t->payoff](double, std::span<const double> x) { return payoff(x); };
        return out;
    }
    return std::nullopt;
}

namespace losses {

inline LossSpec terminal_identity() {
    return {"terminal_identity", TerminalLoss{[](std::span<const double> x) { return x[0]; }}};
}

inline LossSpec terminal_call(double strike) {
    return {"terminal_call(" + std::to_string(strike) + ")",
            TerminalLoss{[strike](std::span<const double> x) { return std::max(x[0] - strike, 0.0); }}};
}

/// Average of the first state component over [0, T]: h1(t, x) = x / T.
inline LossSpec asian_integral(double t_end) {
    if (!(t_end > 0.0))
        throw ArgumentError("asian_integral: T must be positive");
    IntegralFormLoss f;
    f.h1 = [t_end](double, std::span<const double> x) { return x[0] / t_end; };
    return {"asian_integral", f};
}

inline LossSpec running_max() {
    return {"running_max", RunningMaxLoss{[](std::span<const double> x) { return x[0]; }}};
}

} // namespace losses

} // namespace robustrisk
