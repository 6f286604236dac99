#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "robustrisk/error.hpp"
#include "robustrisk/random.hpp"

namespace robustrisk {

/// Uniform discretization of [0, T].
class TimeGrid {
  public:
    TimeGrid(double t_end, std::size_t n_steps) : t_end_(t_end), n_steps_(n_steps) {
        if (!(t_end > 0.0) || !std::isfinite(t_end))
            throw ArgumentError("TimeGrid: horizon T must be positive and finite");
        if (n_steps == 0)
            throw ArgumentError("TimeGrid: n_steps must be at least 1");
        dt_ = t_end_ / static_cast<double>(n_steps_);
    }

    double t_end() const noexcept { return t_end_; }
    std::size_t n_steps() const noexcept { return n_steps_; }
    std::size_t n_nodes() const noexcept { return n_steps_ + 1; }
    double dt() const noexcept { return dt_; }

    /// Node k; the last node is exactly T.
    double node(std::size_t k) const noexcept {
        return k >= n_steps_ ? t_end_ : static_cast<double>(k) * dt_;
    }

    /// Width of step k, t_{k+1} - t_k. Sums of step widths telescope to T exactly.
    double step(std::size_t k) const noexcept { return node(k + 1) - node(k); }

    std::vector<double> nodes() const {
        std::vector<double> out(n_nodes());
        for (std::size_t k = 0; k < out.size(); ++k)
            out[k] = node(k);
        return out;
    }

    bool operator==(const TimeGrid&) const = default;

  private:
    double t_end_;
    std::size_t n_steps_;
    double dt_ = 0.0;
};

/// dX = mu(t, X) dt + sigma(t, X) dW in dimension `dim`. The diffusion
/// callback fills a row-major dim x dim matrix.
struct DiffusionSpec {
    using VectorField = std::function<void(double, std::span<const double>, std::span<double>)>;

    std::size_t dim = 1;
    VectorField drift;
    VectorField diffusion;
    std::vector<double> x0;

    /// One-dimensional model from scalar coefficient functions.
    static DiffusionSpec scalar(std::function<double(double, double)> mu,
                                std::function<double(double, double)> sigma, double x0) {
        DiffusionSpec s;
        s.dim = 1;
        s.drift = [mu](double t, std::span<const double> x, std::span<double> out) {
            out[0] = mu(t, x[0]);
        };
        s.diffusion = [sigma](double t, std::span<const double> x, std::span<double> out) {
            out[0] = sigma(t, x[0]);
        };
        s.x0 = {x0};
        return s;
    }

    double drift_1d(double t, double x) const {
        double in[1] = {x};
        double out[1];
        drift(t, in, out);
        return out[0];
    }

    double diffusion_1d(double t, double x) const {
        double in[1] = {x};
        double out[1];
        diffusion(t, in, out);
        return out[0];
    }

    void validate() const {
        if (dim == 0)
            throw ArgumentError("DiffusionSpec: dim must be positive");
        if (x0.size() != dim)
            throw ArgumentError("DiffusionSpec: x0 has wrong dimension");
        if (!drift || !diffusion)
            throw ArgumentError("DiffusionSpec: drift and diffusion must be set");
    }
};

/// Arithmetic Brownian motion dX = mu dt + sigma dW.
inline DiffusionSpec arithmetic_bm(double mu, double sigma, double x0) {
    return DiffusionSpec::scalar([mu](double, double) { return mu; },
                                 [sigma](double, double) { return sigma; }, x0);
}

/// Geometric Brownian motion simulated on the log-state Y = ln S:
/// dY = (mu - sigma^2/2) dt + sigma dW. `log_x0` is ln S(0).
inline DiffusionSpec gbm_log(double mu, double sigma, double log_x0) {
    const double drift = mu - 0.5 * sigma * sigma;
    return DiffusionSpec::scalar([drift](double, double) { return drift; },
                                 [sigma](double, double) { return sigma; }, log_x0);
}

/// Read-only view of one simulated trajectory: n_nodes x dim, row-major.
class PathView {
  public:
    PathView(const TimeGrid& grid, std::size_t dim, std::span<const double> data)
        : grid_(&grid), dim_(dim), data_(data) {}

    const TimeGrid& grid() const noexcept { return *grid_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t n_nodes() const noexcept { return data_.size() / dim_; }
    std::span<const double> state(std::size_t k) const { return data_.subspan(k * dim_, dim_); }
    double operator[](std::size_t k) const { return data_[k * dim_]; }
    std::span<const double> data() const noexcept { return data_; }

  private:
    const TimeGrid* grid_;
    std::size_t dim_;
    std::span<const double> data_;
};

/// Simulated trajectories. Immutable after construction.
class PathBatch {
  public:
    PathBatch(TimeGrid grid, std::size_t dim, std::size_t n_paths, std::uint64_t seed,
              std::string scheme_tag, std::vector<double> states)
        : grid_(grid), dim_(dim), n_paths_(n_paths), seed_(seed),
          scheme_tag_(std::move(scheme_tag)), states_(std::move(states)) {
        if (states_.size() != n_paths_ * grid_.n_nodes() * dim_)
            throw ArgumentError("PathBatch: state array has the wrong size");
    }

    const TimeGrid& grid() const noexcept { return grid_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t n_paths() const noexcept { return n_paths_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const std::string& scheme_tag() const noexcept { return scheme_tag_; }
    const std::vector<double>& states() const noexcept { return states_; }

    PathView path(std::size_t i) const {
        if (i >= n_paths_)
            throw ArgumentError("PathBatch: path index out of range");
        const std::size_t stride = grid_.n_nodes() * dim_;
        return PathView(grid_, dim_, std::span<const double>(states_).subspan(i * stride, stride));
    }

    /// First state component of path i at node k.
    double at(std::size_t i, std::size_t k, std::size_t component = 0) const {
        return states_[(i * grid_.n_nodes() + k) * dim_ + component];
    }

  private:
    TimeGrid grid_;
    std::size_t dim_;
    std::size_t n_paths_;
    std::uint64_t seed_;
    std::string scheme_tag_;
    std::vector<double> states_;
};

namespace detail {

/// Fills `out` (n_steps * dim) with the Brownian increments sqrt(dt) * xi
/// of path `path_index`.
inline void fill_increments(const TimeGrid& grid, std::size_t dim, std::uint64_t seed,
                            std::size_t path_index, std::span<double> out) {
    const std::size_t blocks = (dim + 1) / 2;
    for (std::size_t k = 0; k < grid.n_steps(); ++k) {
        const double sqrt_dt = std::sqrt(grid.step(k));
        for (std::size_t b = 0; b < blocks; ++b) {
            const auto z = random::normal_pair(seed, path_index, static_cast<std::uint32_t>(k),
                                               static_cast<std::uint32_t>(b));
            out[k * dim + 2 * b] = sqrt_dt * z[0];
            if (2 * b + 1 < dim)
                out[k * dim + 2 * b + 1] = sqrt_dt * z[1];
        }
    }
}

/// Runs body(i) for i in [0, n) over `threads` workers in contiguous chunks.
/// If several indices throw, the exception of the smallest index is rethrown.
template <class Body>
void parallel_for(std::size_t n, unsigned threads, Body&& body) {
    threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::size_t> error_index(threads, n);
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + threads - 1) / threads;
    for (unsigned w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            const std::size_t lo = w * chunk;
            const std::size_t hi = std::min(n, lo + chunk);
            for (std::size_t i = lo; i < hi; ++i) {
                try {
                    body(i);
                } catch (...) {
                    errors[w] = std::current_exception();
                    error_index[w] = i;
                    return;
                }
            }
        });
    }
    for (auto& t : pool)
        t.join();
    std::size_t best = n;
    std::exception_ptr first;
    for (unsigned w = 0; w < threads; ++w) {
        if (errors[w] && error_index[w] < best) {
            best = error_index[w];
            first = errors[w];
        }
    }
    if (first)
        std::rethrow_exception(first);
}

inline std::string format_state(std::span<const double> x) {
    std::ostringstream os;
    os.precision(17);
    os << '[';
    for (std::size_t i = 0; i < x.size(); ++i)
        os << (i ? ", " : "") << x[i];
    os << ']';
    return os.str();
}

} // namespace detail

/// Exact increments dW (= sqrt(dt) * xi) used for path `path_index`; length
/// n_steps * dim, row-major by step. Depends only on (seed, path_index, step).
inline std::vector<double> brownian_increments(const TimeGrid& grid, std::size_t n_paths,
                                               std::uint64_t seed, std::size_t path_index,
                                               std::size_t dim = 1) {
    if (path_index >= n_paths)
        throw ArgumentError("brownian_increments: path_index " + std::to_string(path_index) +
                            " out of range for " + std::to_string(n_paths) + " paths");
    if (dim == 0)
        throw ArgumentError("brownian_increments: dim must be positive");
    std::vector<double> out(grid.n_steps() * dim);
    detail::fill_increments(grid, dim, seed, path_index, out);
    return out;
}

/// Euler-Maruyama simulation. Each path draws its normals from its own
/// counter-based stream, so the result is identical for any `threads`.
inline PathBatch simulate_paths(const DiffusionSpec& spec, const TimeGrid& grid,
                                std::size_t n_paths, std::uint64_t seed, unsigned threads = 1) {
    spec.validate();
    if (n_paths == 0)
        throw ArgumentError("simulate_paths: n_paths must be at least 1");
    const std::size_t d = spec.dim;
    const std::size_t nodes = grid.n_nodes();
    std::vector<double> states(n_paths * nodes * d);

    detail::parallel_for(n_paths, threads, [&](std::size_t i) {
        std::vector<double> dw(grid.n_steps() * d);
        std::vector<double> mu(d), sig(d * d);
        detail::fill_increments(grid, d, seed, i, dw);
        double* x = states.data() + i * nodes * d;
        std::copy(spec.x0.begin(), spec.x0.end(), x);
        for (std::size_t k = 0; k < grid.n_steps(); ++k) {
            const double t = grid.node(k);
            std::span<const double> xk(x + k * d, d);
            spec.drift(t, xk, mu);
            spec.diffusion(t, xk, sig);
            for (std::size_t a = 0; a < d; ++a) {
                if (!std::isfinite(mu[a]))
                    throw SimulationError("simulate_paths: non-finite drift on path " +
                                              std::to_string(i) + " at step " + std::to_string(k) +
                                              ", state " + detail::format_state(xk),
                                          i, k);
                for (std::size_t b = 0; b < d; ++b)
                    if (!std::isfinite(sig[a * d + b]))
                        throw SimulationError("simulate_paths: non-finite diffusion on path " +
                                                  std::to_string(i) + " at step " +
                                                  std::to_string(k) + ", state " +
                                                  detail::format_state(xk),
                                              i, k);
            }
            double* xn = x + (k + 1) * d;
            for (std::size_t a = 0; a < d; ++a) {
                double v = xk[a] + mu[a] * grid.step(k);
                for (std::size_t b = 0; b < d; ++b)
                    v += sig[a * d + b] * dw[k * d + b];
                xn[a] = v;
            }
        }
    });
    return PathBatch(grid, d, n_paths, seed, "euler_maruyama", std::move(states));
}

} // namespace robustrisk
