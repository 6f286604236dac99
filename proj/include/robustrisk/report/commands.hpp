#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "robustrisk/robustrisk.hpp"
#include "robustrisk/report/config.hpp"
#include "robustrisk/report/csv.hpp"
#include "robustrisk/report/manifest.hpp"

namespace robustrisk::report {

/// A parsed configuration plus the run-time knobs that never change results.
struct RunContext {
    RunConfig config;
    std::string config_text;
    std::filesystem::path out_dir;
    unsigned threads = 1;
    std::string timestamp; ///< written to the '#' line of every file

    std::uint64_t seed(std::string_view label) const { return random::derive_seed(config.seed, label); }
};

inline const std::vector<std::string>& measure_columns() {
    static const std::vector<std::string> c{"theta", "c", "U0", "V0", "eta0", "nominal", "std_err_V0",
                                            "n_samples"};
    return c;
}

namespace detail {

inline void emit(const RunContext& ctx, CommandRecord& rec, const std::string& name,
                 const CsvTable& table) {
    std::filesystem::create_directories(ctx.out_dir);
    write_atomic(ctx.out_dir / name, table.str("generated " + ctx.timestamp + " by robustrisk " + kVersion));
    rec.files.push_back(name);
}

inline CsvTable::Row measure_row(const RobustResult& r) {
    CsvTable::Row row;
    row << r.theta << r.c << r.U0 << r.V0 << r.eta0 << r.nominal << r.std_err_V0 << r.n_samples;
    return row;
}

inline Headline headline(const RobustResult& r) { return {r.theta, r.c, r.U0, r.V0, r.eta0}; }

inline void require_paths(const RunConfig& cfg, const char* cmd) {
    if (cfg.loss.is_discrete())
        throw ConfigError(std::string(cmd) + ": a discrete loss has no paths; use measure or sweep");
}

inline PathBatch simulate(const RunContext& ctx) {
    const auto& cfg = ctx.config;
    return simulate_paths(make_model(cfg), TimeGrid(cfg.t_end, cfg.n_steps), cfg.n_paths,
                          ctx.seed("paths"), ctx.threads);
}

inline nlohmann::ordered_json probe_json(const ProbeReport& p) {
    return {{"n_trials", p.n_trials}, {"n_feasible", p.n_feasible}, {"bound", p.bound},
            {"max_value", p.max_value}, {"slack", p.slack}, {"equality_gap", p.equality_gap},
            {"violations", p.violations.size()}, {"passed", p.passed()}};
}

} // namespace detail

/// Terminal losses of the configured run: exact atoms or a simulated sample.
inline LossSample loss_sample(const RunContext& ctx) {
    const auto& cfg = ctx.config;
    if (cfg.loss.is_discrete())
        return LossSample::atoms(cfg.loss.values, cfg.loss.probs);
    const auto paths = detail::simulate(ctx);
    return LossSample::monte_carlo(terminal_losses(make_loss(cfg), paths, ctx.threads));
}

/// measure.csv: one row per theta; any calibration failure aborts.
inline CommandRecord cmd_measure(const RunContext& ctx) {
    CommandRecord rec;
    rec.command = "measure";
    const auto div = make_divergence(ctx.config);
    const auto sample = loss_sample(ctx);
    CsvTable table(measure_columns());
    auto probes = nlohmann::ordered_json::array();
    for (double theta : ctx.config.thetas) {
        const auto r = measure_at_zero(sample, div, theta);
        table.add(detail::measure_row(r));
        rec.headline.push_back(detail::headline(r));
        auto p = detail::probe_json(
            feasible_measure_probe(sample, div, r, ctx.config.n_probe, ctx.seed("probe")));
        p["theta"] = theta;
        p["calibration"] = to_string(r.calibration.method);
        probes.push_back(std::move(p));
    }
    rec.details["divergence"] = div.name;
    rec.details["probe"] = std::move(probes);
    detail::emit(ctx, rec, "measure.csv", table);
    return rec;
}

/// sweep.csv: the frontier along the theta grid; failed points keep their row
/// with status "error: ..." and NaN values.
inline CommandRecord cmd_sweep(const RunContext& ctx) {
    CommandRecord rec;
    rec.command = "sweep";
    const auto div = make_divergence(ctx.config);
    const auto sample = loss_sample(ctx);
    auto cols = measure_columns();
    cols.push_back("status");
    CsvTable table(cols);
    std::size_t failed = 0;
    for (const auto& e : theta_sweep(sample, div, ctx.config.thetas)) {
        if (e.result) {
            auto row = detail::measure_row(*e.result);
            row << "ok";
            table.add(row);
            rec.headline.push_back(detail::headline(*e.result));
        } else {
            ++failed;
            const double nan = std::numeric_limits<double>::quiet_NaN();
            CsvTable::Row row;
            row << e.theta << nan << nan << nan << nan << nan << nan << sample.size()
                << ("error: " + e.error);
            table.add(row);
        }
    }
    rec.details["divergence"] = div.name;
    rec.details["failed_points"] = failed;
    detail::emit(ctx, rec, "sweep.csv", table);
    return rec;
}

/// panel.csv (long format, first panel_max_paths paths) and diagnostics.csv
/// (per-node fit quality, martingale residuals and an injected-fault control)
/// for the first theta.
inline CommandRecord cmd_process(const RunContext& ctx) {
    const auto& cfg = ctx.config;
    detail::require_paths(cfg, "process");
    CommandRecord rec;
    rec.command = "process";
    const auto div = make_divergence(cfg);
    const auto loss = make_loss(cfg);
    const double theta = cfg.thetas.front();
    const auto paths = detail::simulate(ctx);
    const auto panel = estimate_conditional_processes(paths, loss, div, theta, cfg.regression);
    const auto& grid = panel.grid;
    const std::size_t nn = panel.n_nodes();

    CsvTable pt({"path_id", "node_index", "t", "U", "V", "eta", "Z"});
    const std::size_t n_export = std::min(panel.n_paths, cfg.panel_max_paths);
    for (std::size_t i = 0; i < n_export; ++i)
        for (std::size_t k = 0; k < nn; ++k) {
            const auto q = panel.idx(i, k);
            CsvTable::Row row;
            row << i << k << grid.node(k) << panel.U[q] << panel.V[q] << panel.eta[q] << panel.Z[q];
            pt.add(row);
        }

    const auto check = martingale_residual_check(panel, paths, loss);
    const std::size_t fault_node = nn / 2 == nn - 1 ? 0 : nn / 2;
    const auto faulty = martingale_residual_check(inject_fault(panel, fault_node, 0.1), paths, loss);

    CsvTable dt({"check", "node_index", "t", "value", "threshold", "pass"});
    auto info = [&](const char* name, std::size_t k, double v) {
        CsvTable::Row row;
        row << name << k << grid.node(k) << v << "" << "";
        dt.add(row);
    };
    auto upper = [&](const char* name, std::size_t k, double v, double thr) {
        CsvTable::Row row;
        row << name << k << grid.node(k) << v << thr << (v <= thr);
        dt.add(row);
    };
    for (std::size_t k = 0; k < nn; ++k) {
        const auto& nd = panel.nodes[k];
        info("r2_Z", k, nd.r2_Z);
        info("r2_M", k, nd.r2_M);
        info("r2_W", k, nd.r2_W);
        info("masked_fraction", k, nd.masked_fraction);
        info("rms_se_U", k, nd.rms_se_U);
        info("rms_se_V", k, nd.rms_se_V);
    }
    for (const auto& r : check.nodes) {
        upper("martingale_t_Z", r.node, r.Z.max_t_stat, check.threshold);
        upper("martingale_t_M", r.node, r.M.max_t_stat, check.threshold);
        upper("martingale_t_W", r.node, r.W.max_t_stat, check.threshold);
        const double z = r.suboptimal_se > 0.0 ? r.suboptimal_excess / r.suboptimal_se
                         : r.suboptimal_excess > 0.0 ? INFINITY : 0.0;
        upper("nominal_above_value_z", r.node, z, check.threshold);
    }
    // The control passes when the corrupted panel is flagged.
    {
        CsvTable::Row row;
        row << "negative_control_max_t" << fault_node << grid.node(fault_node) << faulty.max_t_stat
            << check.threshold << !faulty.martingale_ok();
        dt.add(row);
    }

    rec.headline.push_back({theta, panel.c, panel.U[panel.idx(0, 0)], panel.V[panel.idx(0, 0)],
                            panel.eta[panel.idx(0, 0)]});
    rec.details["estimator"] = to_string(panel.estimator);
    rec.details["martingale_ok"] = check.martingale_ok();
    rec.details["max_t_stat"] = check.max_t_stat;
    rec.details["supermartingale_ok"] = check.supermartingale_ok();
    rec.details["negative_control_flagged"] = !faulty.martingale_ok();
    rec.details["masked_fraction"] = panel.masked_fraction();
    rec.details["panel_paths_exported"] = n_export;
    rec.details["warnings"] = panel.warnings;
    detail::emit(ctx, rec, "panel.csv", pt);
    detail::emit(ctx, rec, "diagnostics.csv", dt);
    return rec;
}

/// pde_u.csv, pde_v.csv and pde_vs_mc.csv for the first theta (KL only).
inline CommandRecord cmd_pde(const RunContext& ctx) {
    const auto& cfg = ctx.config;
    detail::require_paths(cfg, "pde");
    const auto div = make_divergence(cfg);
    if (div.kind != Divergence::Kind::kl)
        throw ConfigError("pde: only the kl divergence is supported");
    const auto loss = make_loss(cfg);
    const auto integral = as_integral_form(loss);
    if (!integral)
        throw ConfigError("pde: loss '" + cfg.loss.name + "' has no integral form");
    const auto model = make_model(cfg);
    const double theta = cfg.thetas.front();

    PdeGrid grid = PdeGrid::around(model, cfg.t_end, theta);
    if (cfg.pde) {
        const auto& p = *cfg.pde;
        grid = PdeGrid::around(model, cfg.t_end, theta, p.n_x, p.n_t);
        if (p.x_min)
            grid.x_min = *p.x_min;
        if (p.x_max)
            grid.x_max = *p.x_max;
        grid.scheme = p.scheme;
    }
    const auto sol = solve_pde(model, *integral, theta, cfg.t_end, grid);

    CommandRecord rec;
    rec.command = "pde";
    CsvTable ut({"t", "x", "u"}), vt({"t", "x", "v"});
    for (std::size_t k = 0; k < sol.n_time(); ++k)
        for (std::size_t j = 0; j < grid.n_space(); ++j) {
            CsvTable::Row ru, rv;
            ru << sol.t(k) << grid.x(j) << sol.u_at(k, j);
            rv << sol.t(k) << grid.x(j) << sol.v_at(k, j);
            ut.add(ru);
            vt.add(rv);
        }

    const double x0 = cfg.model.x0;
    const double u0 = sol.u_interp(0.0, x0);
    const double v0 = sol.v_interp(0.0, x0);
    const double eta0 = theta * (v0 - u0);

    const auto paths = detail::simulate(ctx);
    const auto sample = LossSample::monte_carlo(terminal_losses(loss, paths, ctx.threads));
    const auto mc = measure_at_zero(sample, div, theta);
    const auto gir = girsanov_resimulate(model, TimeGrid(cfg.t_end, cfg.n_steps), div, theta,
                                         pde_value_gradient(sol, *integral), loss, cfg.n_paths,
                                         ctx.seed("girsanov"), v0, 0.0, ctx.threads);

    CsvTable cmp({"quantity", "pde", "mc", "mc_std_err", "gap", "tolerance", "pass"});
    auto add = [&](const char* q, double p, double m, double se) {
        const double tol = std::max(4.0 * se, 5e-3);
        CsvTable::Row row;
        row << q << p << m << se << (m - p) << tol << (std::abs(m - p) <= tol);
        cmp.add(row);
    };
    add("U0", u0, mc.U0, mc.std_err_U0);
    add("V0", v0, mc.V0, mc.std_err_V0);
    add("eta0", eta0, mc.eta0, mc.std_err_eta0);
    add("girsanov_V0", v0, gir.adjusted_mean, gir.adjusted_se);

    rec.headline.push_back({theta, mc.c, u0, v0, eta0});
    rec.details["grid"] = {{"x_min", grid.x_min}, {"x_max", grid.x_max}, {"n_x", grid.n_x},
                           {"n_t", grid.n_t}};
    rec.details["max_picard_iterations"] =
        sol.picard_iterations.empty()
            ? 0
            : *std::max_element(sol.picard_iterations.begin(), sol.picard_iterations.end());
    rec.details["max_picard_residual"] = sol.max_picard_residual;
    rec.details["notices"] = sol.notices;
    rec.details["girsanov_note"] = gir.note;
    detail::emit(ctx, rec, "pde_u.csv", ut);
    detail::emit(ctx, rec, "pde_v.csv", vt);
    detail::emit(ctx, rec, "pde_vs_mc.csv", cmp);
    return rec;
}

/// Every command that applies to the configuration.
inline std::vector<CommandRecord> cmd_all(const RunContext& ctx) {
    std::vector<CommandRecord> out;
    out.push_back(cmd_measure(ctx));
    out.push_back(cmd_sweep(ctx));
    if (!ctx.config.loss.is_discrete()) {
        out.push_back(cmd_process(ctx));
        const auto div = make_divergence(ctx.config);
        if (div.kind == Divergence::Kind::kl && as_integral_form(make_loss(ctx.config)))
            out.push_back(cmd_pde(ctx));
    }
    return out;
}

} // namespace robustrisk::report
