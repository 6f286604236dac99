#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <cstdint>
#include <string>
#include <vector>

#include "robustrisk/error.hpp"
#include "robustrisk/loss.hpp"
#include "robustrisk/timegrid.hpp"

namespace robustrisk {

enum class AdvectionScheme { central, upwind };

/// Space-time grid for the 1-d backward solves. Nodes x_j = x_min + j dx for
/// j = 0 .. n_x + 1, so n_x counts interior nodes.
struct PdeGrid {
    double x_min = -1.0;
    double x_max = 1.0;
    std::size_t n_x = 400;
    std::size_t n_t = 400;
    AdvectionScheme scheme = AdvectionScheme::central;
    double picard_tol = 1e-10;
    int picard_max_iter = 50;

    std::size_t n_space() const { return n_x + 2; }
    double dx() const { return (x_max - x_min) / static_cast<double>(n_x + 1); }
    double x(std::size_t j) const {
        return j == n_x + 1 ? x_max : x_min + static_cast<double>(j) * dx();
    }

    /// x0 +- (6 sigma sqrt(T) + |mu| T + theta sigma^2 T), with sigma and mu sampled at x0.
    static PdeGrid around(const DiffusionSpec& model, double t_end, double theta,
                          std::size_t n_x = 400, std::size_t n_t = 400) {
        const double x0 = model.x0.at(0);
        const double s = std::abs(model.diffusion_1d(0.0, x0));
        const double m = std::abs(model.drift_1d(0.0, x0));
        const double half = 6.0 * s * std::sqrt(t_end) + m * t_end + theta * s * s * t_end;
        PdeGrid g;
        g.x_min = x0 - std::max(half, 1e-3);
        g.x_max = x0 + std::max(half, 1e-3);
        g.n_x = n_x;
        g.n_t = n_t;
        return g;
    }
};

/// Slices u(t_k, x_j) and v(t_k, x_j), row-major by time node.
struct PdeSolution {
    double t_end = 1.0;
    double theta = 0.0;
    PdeGrid grid;
    std::vector<double> u;
    std::vector<double> v;
    std::vector<int> picard_iterations; ///< per time step of the value solve
    double max_picard_residual = 0.0;
    std::vector<std::string> notices;

    std::size_t n_time() const { return grid.n_t + 1; }
    double t(std::size_t k) const {
        return k >= grid.n_t ? t_end : static_cast<double>(k) * t_end / static_cast<double>(grid.n_t);
    }
    double u_at(std::size_t k, std::size_t j) const { return u[k * grid.n_space() + j]; }
    double v_at(std::size_t k, std::size_t j) const { return v[k * grid.n_space() + j]; }

    /// Bilinear interpolation in (t, x); NaN outside the domain.
    double interpolate(const std::vector<double>& field, double t, double x) const {
        if (field.empty() || !(x >= grid.x_min && x <= grid.x_max) || !(t >= 0.0 && t <= t_end))
            return std::numeric_limits<double>::quiet_NaN();
        const double dt = t_end / static_cast<double>(grid.n_t);
        const double tk = std::min(t / dt, static_cast<double>(grid.n_t));
        const auto k0 = std::min<std::size_t>(static_cast<std::size_t>(tk), grid.n_t - 1);
        const double wt = tk - static_cast<double>(k0);
        const double xs = (x - grid.x_min) / grid.dx();
        const auto j0 = std::min<std::size_t>(static_cast<std::size_t>(xs), grid.n_x);
        const double wx = xs - static_cast<double>(j0);
        const std::size_t N = grid.n_space();
        auto at = [&](std::size_t k, std::size_t j) { return field[k * N + j]; };
        const double a = (1.0 - wx) * at(k0, j0) + wx * at(k0, j0 + 1);
        const double b = (1.0 - wx) * at(k0 + 1, j0) + wx * at(k0 + 1, j0 + 1);
        return (1.0 - wt) * a + wt * b;
    }
    double u_interp(double t, double x) const { return interpolate(u, t, x); }
    double v_interp(double t, double x) const { return interpolate(v, t, x); }
};

namespace detail {

/// Thomas algorithm; sub[0] and sup[n-1] are ignored.
inline void solve_tridiagonal(std::vector<double> sub, std::vector<double> diag,
                              std::vector<double> sup, std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double m = sub[i] / diag[i - 1];
        diag[i] -= m * sup[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    rhs[n - 1] /= diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;)
        rhs[i] = (rhs[i] - sup[i] * rhs[i + 1]) / diag[i];
}

/// First derivative on the grid: central inside, one-sided second order at the ends.
inline std::vector<double> gradient(std::span<const double> f, double dx) {
    const std::size_t N = f.size();
    std::vector<double> g(N);
    for (std::size_t j = 1; j + 1 < N; ++j)
        g[j] = (f[j + 1] - f[j - 1]) / (2.0 * dx);
    g[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dx);
    g[N - 1] = (3.0 * f[N - 1] - 4.0 * f[N - 2] + f[N - 3]) / (2.0 * dx);
    return g;
}

/// One backward-Euler step of
///   w_t + b (w_x + h) + D w_xx + s = 0,  D = sigma^2 / 2,
/// with linear extrapolation (w_xx = 0) at both ends.
inline std::vector<double> backward_step(std::span<const double> w_next, std::span<const double> b,
                                         std::span<const double> diff, std::span<const double> h,
                                         std::span<const double> src, double dt, double dx,
                                         bool upwind) {
    const std::size_t N = w_next.size();
    const std::size_t n = N - 2;
    std::vector<double> sub(n), diag(n), sup(n), rhs(n);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t j = r + 1;
        const double dd = diff[j] / (dx * dx);
        double lo = dd, up = dd, mid = -2.0 * dd;
        if (upwind) {
            if (b[j] >= 0.0) {
                up += b[j] / dx;
                mid -= b[j] / dx;
            } else {
                lo -= b[j] / dx;
                mid += b[j] / dx;
            }
        } else {
            up += b[j] / (2.0 * dx);
            lo -= b[j] / (2.0 * dx);
        }
        // w_j - dt (lo w_{j-1} + mid w_j + up w_{j+1}) = w_next_j + dt (b h + s)
        sub[r] = -dt * lo;
        diag[r] = 1.0 - dt * mid;
        sup[r] = -dt * up;
        rhs[r] = w_next[j] + dt * (b[j] * h[j] + src[j]);
    }
    // w_0 = 2 w_1 - w_2 and w_{N-1} = 2 w_{N-2} - w_{N-3}
    diag[0] += 2.0 * sub[0];
    sup[0] -= sub[0];
    diag[n - 1] += 2.0 * sup[n - 1];
    sub[n - 1] -= sup[n - 1];
    solve_tridiagonal(std::move(sub), std::move(diag), std::move(sup), rhs);
    std::vector<double> w(N);
    std::copy(rhs.begin(), rhs.end(), w.begin() + 1);
    w[0] = 2.0 * w[1] - w[2];
    w[N - 1] = 2.0 * w[N - 2] - w[N - 3];
    return w;
}

struct Coefficients {
    std::vector<double> mu, diff, h, h1;
};

inline Coefficients sample_coefficients(const DiffusionSpec& model, const IntegralFormLoss& loss,
                                        const PdeGrid& grid, double t) {
    const std::size_t N = grid.n_space();
    Coefficients c{std::vector<double>(N), std::vector<double>(N), std::vector<double>(N, 0.0),
                   std::vector<double>(N, 0.0)};
    for (std::size_t j = 0; j < N; ++j) {
        const double x = grid.x(j);
        const double xs[1] = {x};
        c.mu[j] = model.drift_1d(t, x);
        const double s = model.diffusion_1d(t, x);
        c.diff[j] = 0.5 * s * s;
        if (loss.h) {
            double hv[1];
            loss.h(t, xs, hv);
            c.h[j] = hv[0];
        }
        if (loss.h1)
            c.h1[j] = loss.h1(t, xs);
        if (!std::isfinite(c.mu[j]) || !std::isfinite(c.diff[j]) || !std::isfinite(c.h[j]) ||
            !std::isfinite(c.h1[j]))
            throw PdeError("pde: non-finite coefficient at t=" + std::to_string(t) +
                               ", x=" + std::to_string(x),
                           0, std::numeric_limits<double>::quiet_NaN());
    }
    return c;
}

inline bool needs_upwind(std::span<const double> b, std::span<const double> diff, double dx) {
    for (std::size_t j = 1; j + 1 < b.size(); ++j) {
        if (b[j] == 0.0)
            continue;
        if (!(diff[j] > 0.0) || std::abs(b[j]) * dx / diff[j] > 2.0)
            return true;
    }
    return false;
}

inline void validate(const DiffusionSpec& model, const PdeGrid& grid, double t_end,
                     std::vector<std::string>& notices) {
    model.validate();
    if (model.dim != 1)
        throw ArgumentError("pde: only one-dimensional models are supported");
    if (grid.n_x < 50 || grid.n_t < 50)
        throw ArgumentError("pde: n_x and n_t must be at least 50");
    const double x0 = model.x0[0];
    if (!(grid.x_min < x0 && x0 < grid.x_max))
        throw ArgumentError("pde: x0 must lie strictly inside [x_min, x_max]");
    double s_max = 0.0;
    for (int k = 0; k <= 10; ++k)
        for (std::size_t j = 0; j < grid.n_space(); j += std::max<std::size_t>(1, grid.n_space() / 20))
            s_max = std::max(s_max, std::abs(model.diffusion_1d(t_end * k / 10.0, grid.x(j))));
    const double need = 5.0 * s_max * std::sqrt(t_end);
    if (x0 - grid.x_min < need || grid.x_max - x0 < need)
        notices.push_back("domain narrower than 5 sigma sqrt(T) around x0; boundary error may reach x0");
}

} // namespace detail

/// Backward solve of
///   u_t + mu (u_x + h) + (theta/2) (sigma (u_x + h))^2 + (1/2) sigma^2 u_xx + h1 = 0,
///   u(T, x) = h0(T, x).
/// Each step is implicit in the diffusion; the nonlinearity is linearized
/// around the previous Picard iterate, b = mu + (theta/2) sigma^2 (u_x + h), and
/// iterated to grid.picard_tol.
inline PdeSolution solve_value_pde(const DiffusionSpec& model, const IntegralFormLoss& loss,
                                   double theta, double t_end, const PdeGrid& grid) {
    if (!(theta >= 0.0))
        throw ArgumentError("solve_value_pde: theta must be nonnegative");
    PdeSolution sol;
    sol.t_end = t_end;
    sol.theta = theta;
    sol.grid = grid;
    detail::validate(model, grid, t_end, sol.notices);

    const std::size_t N = grid.n_space();
    const std::size_t nt = grid.n_t;
    const double dx = grid.dx();
    sol.u.assign((nt + 1) * N, 0.0);
    sol.picard_iterations.assign(nt, 0);

    for (std::size_t j = 0; j < N; ++j) {
        const double xs[1] = {grid.x(j)};
        sol.u[nt * N + j] = loss.h0 ? loss.h0(t_end, xs) : 0.0;
    }

    bool upwind = grid.scheme == AdvectionScheme::upwind;
    std::vector<double> b(N);
    for (std::size_t k = nt; k-- > 0;) {
        const double t = sol.t(k);
        const auto co = detail::sample_coefficients(model, loss, grid, t);
        std::span<const double> next(sol.u.data() + (k + 1) * N, N);
        std::vector<double> cur(next.begin(), next.end());
        double resid = std::numeric_limits<double>::infinity();
        int it = 0;
        while (resid > grid.picard_tol) {
            if (++it > grid.picard_max_iter)
                throw PdeError("solve_value_pde: Picard iteration did not converge at step " +
                                   std::to_string(k) + " (residual " + std::to_string(resid) +
                                   "); try a smaller time step",
                               k, resid);
            const auto ux = detail::gradient(cur, dx);
            for (std::size_t j = 0; j < N; ++j)
                b[j] = co.mu[j] + 0.5 * theta * 2.0 * co.diff[j] * (ux[j] + co.h[j]);
            if (!upwind && detail::needs_upwind(b, co.diff, dx)) {
                upwind = true;
                sol.notices.push_back("value solve: cell Peclet number above 2 at step " +
                                      std::to_string(k) + "; switched to upwind advection");
            }
            auto nxt = detail::backward_step(next, b, co.diff, co.h, co.h1, t_end / static_cast<double>(nt), dx, upwind);
            resid = 0.0;
            for (std::size_t j = 0; j < N; ++j)
                resid = std::max(resid, std::abs(nxt[j] - cur[j]));
            cur = std::move(nxt);
        }
        sol.picard_iterations[k] = it;
        sol.max_picard_residual = std::max(sol.max_picard_residual, resid);
        std::copy(cur.begin(), cur.end(), sol.u.begin() + static_cast<std::ptrdiff_t>(k * N));
    }
    return sol;
}

/// Backward solve of the linear worst-case equation
///   v_t + (mu + theta sigma^2 (u_x + h)) (v_x + h) + (1/2) sigma^2 v_xx + h1 = 0,
///   v(T, x) = h0(T, x),
/// using the u slices already stored in `sol`. Central advection falls back
/// to upwind when the cell Peclet number exceeds 2.
inline void solve_worst_case_pde(const DiffusionSpec& model, const IntegralFormLoss& loss,
                                 PdeSolution& sol) {
    const PdeGrid& grid = sol.grid;
    const std::size_t N = grid.n_space();
    const std::size_t nt = grid.n_t;
    const double dx = grid.dx();
    if (sol.u.size() != (nt + 1) * N)
        throw ArgumentError("solve_worst_case_pde: value slices missing");
    sol.v.assign((nt + 1) * N, 0.0);
    std::copy(sol.u.begin() + static_cast<std::ptrdiff_t>(nt * N), sol.u.end(),
              sol.v.begin() + static_cast<std::ptrdiff_t>(nt * N));

    bool upwind = grid.scheme == AdvectionScheme::upwind;
    std::vector<double> b(N);
    for (std::size_t k = nt; k-- > 0;) {
        const double t = sol.t(k);
        const auto co = detail::sample_coefficients(model, loss, grid, t);
        const auto ux = detail::gradient(std::span<const double>(sol.u.data() + k * N, N), dx);
        for (std::size_t j = 0; j < N; ++j)
            b[j] = co.mu[j] + sol.theta * 2.0 * co.diff[j] * (ux[j] + co.h[j]);
        if (!upwind && detail::needs_upwind(b, co.diff, dx)) {
            upwind = true;
            sol.notices.push_back("worst-case solve: cell Peclet number above 2 at step " +
                                  std::to_string(k) + "; switched to upwind advection");
        }
        const auto w = detail::backward_step(std::span<const double>(sol.v.data() + (k + 1) * N, N),
                                             b, co.diff, co.h, co.h1, sol.t_end / static_cast<double>(nt), dx, upwind);
        std::copy(w.begin(), w.end(), sol.v.begin() + static_cast<std::ptrdiff_t>(k * N));
    }
}

/// Value and worst-case solves in sequence.
inline PdeSolution solve_pde(const DiffusionSpec& model, const IntegralFormLoss& loss, double theta,
                             double t_end, const PdeGrid& grid) {
    auto sol = solve_value_pde(model, loss, theta, t_end, grid);
    solve_worst_case_pde(model, loss, sol);
    return sol;
}

/// U, V and eta along one path from the PDE slices plus the running integrals.
struct PathProcesses {
    std::vector<double> U, V, eta;
    std::vector<std::uint8_t> masked; ///< path outside the spatial domain
};

inline PathProcesses assemble_processes(const PdeSolution& sol, const PathView& path,
                                        const IntegralFormLoss& loss) {
    const std::size_t n = path.n_nodes();
    const auto ri = running_integrals(loss, path);
    PathProcesses out{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n),
                      std::vector<std::uint8_t>(n, 0)};
    for (std::size_t k = 0; k < n; ++k) {
        const double t = path.grid().node(k);
        const double x = path[k];
        const double u = sol.u_interp(t, x);
        const double v = sol.v_interp(t, x);
        const double run = ri.dt_part[k] + ri.dx_part[k];
        if (!std::isfinite(u) || !std::isfinite(v))
            out.masked[k] = 1;
        out.U[k] = u + run;
        out.V[k] = v + run;
        out.eta[k] = sol.theta * (v - u);
    }
    return out;
}

/// grad U(t, x) = u_x(t, x) + h(t, x), with u_x by central differences of
/// the interpolated slices.
inline auto pde_value_gradient(const PdeSolution& sol, const IntegralFormLoss& loss) {
    return [&sol, h = loss.h](double t, std::span<const double> x, std::span<double> out) {
        const double dx = sol.grid.dx();
        const double xc = std::clamp(x[0], sol.grid.x_min + dx, sol.grid.x_max - dx);
        out[0] = (sol.u_interp(t, xc + dx) - sol.u_interp(t, xc - dx)) / (2.0 * dx);
        if (h) {
            double hv[1];
            h(t, x, hv);
            out[0] += hv[0];
        }
    };
}

} // namespace robustrisk
