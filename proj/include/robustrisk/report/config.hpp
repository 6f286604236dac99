#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <json.hpp>

#include "robustrisk/divergence.hpp"
#include "robustrisk/error.hpp"
#include "robustrisk/loss.hpp"
#include "robustrisk/pde.hpp"
#include "robustrisk/process.hpp"
#include "robustrisk/timegrid.hpp"

namespace robustrisk::report {

struct ModelConfig {
    std::string name = "abm"; ///< "abm" or "gbm_log"
    double mu = 0.0;
    double sigma = 0.0;
    double x0 = 0.0; ///< initial state; ln S(0) for gbm_log
};

struct LossConfig {
    std::string name = "terminal_identity";
    double strike = 0.0;
    std::vector<double> values; ///< "discrete" atoms
    std::vector<double> probs;
    bool is_discrete() const { return name == "discrete"; }
};

struct DivergenceConfig {
    std::string name = "kl"; ///< "kl", "scaled_kl", "chi2"
    double d = 1.0;
};

struct PdeConfig {
    std::optional<double> x_min, x_max;
    std::size_t n_x = 400;
    std::size_t n_t = 400;
    AdvectionScheme scheme = AdvectionScheme::central;
};

/// A parsed run configuration. Numeric fields accept JSON numbers or decimal
/// strings; names of built-ins may carry arguments, e.g. "terminal_call(0.1)".
struct RunConfig {
    ModelConfig model;
    double t_end = 1.0;
    std::size_t n_steps = 1;
    LossConfig loss;
    DivergenceConfig divergence;
    std::vector<double> thetas;
    std::size_t n_paths = 1;
    std::uint64_t seed = 0;
    RegressionConfig regression;
    std::size_t n_probe = 200;
    std::optional<PdeConfig> pde;
    std::string out_dir = "out";
    std::vector<std::string> formats{"csv", "json"};
    std::size_t panel_max_paths = 1000;
};

namespace detail {

using nlohmann::json;

inline double number(const json& j, const std::string& what) {
    if (j.is_number())
        return j.get<double>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        std::size_t pos = 0;
        double v;
        try {
            v = std::stod(s, &pos);
        } catch (const std::exception&) {
            throw ConfigError(what + ": '" + s + "' is not a number");
        }
        if (pos != s.size())
            throw ConfigError(what + ": '" + s + "' is not a number");
        return v;
    }
    throw ConfigError(what + ": expected a number");
}

inline double number_or(const json& obj, const char* key, double dflt, const std::string& sect) {
    return obj.contains(key) ? number(obj.at(key), sect + "." + key) : dflt;
}

inline std::uint64_t count(const json& j, const std::string& what) {
    const double v = number(j, what);
    if (!(v >= 0.0) || v != std::floor(v) || v > 9.0e15)
        throw ConfigError(what + ": expected a nonnegative integer");
    return static_cast<std::uint64_t>(v);
}

/// Splits "name(arg)" into name and the optional argument.
inline std::pair<std::string, std::optional<double>> call_form(const std::string& s,
                                                               const std::string& what) {
    static const std::regex re(R"(^\s*([A-Za-z_][A-Za-z0-9_]*)\s*(?:\(\s*([^)]*?)\s*\))?\s*$)");
    std::smatch m;
    if (!std::regex_match(s, m, re))
        throw ConfigError(what + ": cannot parse '" + s + "'");
    std::optional<double> arg;
    if (m[2].matched)
        arg = number(json(m[2].str()), what);
    return {m[1].str(), arg};
}

inline const json& section(const json& root, const char* key) {
    if (!root.contains(key))
        throw ConfigError(std::string("missing section '") + key + "'");
    return root.at(key);
}

} // namespace detail

inline RunConfig parse_config(const std::string& text) {
    using detail::json;
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!root.is_object())
        throw ConfigError("config root must be an object");

    RunConfig cfg;
    try {
        // model
        const auto& m = detail::section(root, "model");
        if (m.is_string()) {
            cfg.model.name = m.get<std::string>();
        } else {
            cfg.model.name = m.value("name", "abm");
            cfg.model.mu = detail::number_or(m, "mu", 0.0, "model");
            cfg.model.sigma = detail::number_or(m, "sigma", 0.0, "model");
            cfg.model.x0 = detail::number_or(m, "x0", 0.0, "model");
        }
        if (cfg.model.name == "custom")
            throw ConfigError("model 'custom' is only available through the library API");
        if (cfg.model.name != "abm" && cfg.model.name != "gbm_log")
            throw ConfigError("unknown model '" + cfg.model.name + "'");
        if (!(cfg.model.sigma >= 0.0) || !std::isfinite(cfg.model.mu) || !std::isfinite(cfg.model.x0))
            throw ConfigError("model parameters must be finite with sigma >= 0");

        // loss
        const auto& l = detail::section(root, "loss");
        if (l.is_string()) {
            auto [name, arg] = detail::call_form(l.get<std::string>(), "loss");
            cfg.loss.name = name;
            if (arg)
                cfg.loss.strike = *arg;
            else if (name == "terminal_call")
                throw ConfigError("loss terminal_call needs a strike, e.g. terminal_call(0.1)");
        } else {
            auto [name, arg] = detail::call_form(l.value("name", ""), "loss.name");
            cfg.loss.name = name;
            cfg.loss.strike = arg ? *arg : detail::number_or(l, "strike", 0.0, "loss");
            if (name == "discrete") {
                for (const auto& v : l.at("values"))
                    cfg.loss.values.push_back(detail::number(v, "loss.values"));
                if (l.contains("probs")) {
                    for (const auto& p : l.at("probs"))
                        cfg.loss.probs.push_back(detail::number(p, "loss.probs"));
                } else {
                    cfg.loss.probs.assign(cfg.loss.values.size(),
                                          1.0 / static_cast<double>(cfg.loss.values.size()));
                }
                if (cfg.loss.values.empty() || cfg.loss.values.size() != cfg.loss.probs.size())
                    throw ConfigError("loss.values and loss.probs must be non-empty and equal length");
            }
        }
        static const char* known_losses[] = {"terminal_identity", "terminal_call", "asian_integral",
                                              "running_max", "discrete"};
        if (std::find(std::begin(known_losses), std::end(known_losses), cfg.loss.name) ==
            std::end(known_losses))
            throw ConfigError("unknown loss '" + cfg.loss.name + "'");

        // divergence
        const auto& dv = detail::section(root, "divergence");
        std::string dname;
        std::optional<double> darg;
        if (dv.is_string()) {
            std::tie(dname, darg) = detail::call_form(dv.get<std::string>(), "divergence");
        } else {
            std::tie(dname, darg) = detail::call_form(dv.value("name", ""), "divergence.name");
            if (!darg && dv.contains("d"))
                darg = detail::number(dv.at("d"), "divergence.d");
        }
        cfg.divergence.name = dname;
        if (dname == "scaled_kl") {
            if (!darg || !(*darg > 0.0))
                throw ConfigError("divergence scaled_kl needs a positive parameter, e.g. scaled_kl(2)");
            cfg.divergence.d = *darg;
        } else if (dname != "kl" && dname != "chi2") {
            throw ConfigError("unknown divergence '" + dname + "'");
        }

        // theta
        const auto& th = detail::section(root, "theta");
        if (th.is_array()) {
            for (const auto& t : th)
                cfg.thetas.push_back(detail::number(t, "theta"));
            if (cfg.thetas.empty())
                throw ConfigError("theta grid is empty");
        } else {
            cfg.thetas.push_back(detail::number(th, "theta"));
        }
        for (std::size_t i = 0; i < cfg.thetas.size(); ++i) {
            if (!(cfg.thetas[i] > 0.0) || !std::isfinite(cfg.thetas[i]))
                throw ConfigError("theta must be positive");
            if (i > 0 && !(cfg.thetas[i] > cfg.thetas[i - 1]))
                throw ConfigError("theta grid must be strictly ascending");
        }

        // grid and Monte Carlo
        if (root.contains("grid")) {
            const auto& g = root.at("grid");
            cfg.t_end = detail::number_or(g, "T", 1.0, "grid");
            if (g.contains("n_steps"))
                cfg.n_steps = detail::count(g.at("n_steps"), "grid.n_steps");
        } else if (!cfg.loss.is_discrete()) {
            throw ConfigError("missing section 'grid'");
        }
        if (!(cfg.t_end > 0.0) || cfg.n_steps < 1)
            throw ConfigError("grid: T must be positive and n_steps >= 1");
        if (root.contains("mc")) {
            const auto& mc = root.at("mc");
            if (mc.contains("n_paths"))
                cfg.n_paths = detail::count(mc.at("n_paths"), "mc.n_paths");
            if (mc.contains("seed"))
                cfg.seed = detail::count(mc.at("seed"), "mc.seed");
            if (mc.contains("n_probe"))
                cfg.n_probe = detail::count(mc.at("n_probe"), "mc.n_probe");
        } else if (!cfg.loss.is_discrete()) {
            throw ConfigError("missing section 'mc'");
        }
        if (cfg.n_paths < 1)
            throw ConfigError("mc.n_paths must be at least 1");

        // regression
        if (root.contains("regression")) {
            const auto& r = root.at("regression");
            if (r.contains("degree"))
                cfg.regression.degree = static_cast<int>(detail::count(r.at("degree"), "regression.degree"));
            cfg.regression.ridge = detail::number_or(r, "ridge", 0.0, "regression");
            if (cfg.regression.ridge < 0.0)
                throw ConfigError("regression.ridge must be nonnegative");
            if (r.contains("features")) {
                for (const auto& f : r.at("features")) {
                    const auto s = f.get<std::string>();
                    if (s == "state")
                        cfg.regression.features.push_back(Feature::state);
                    else if (s == "running_h1")
                        cfg.regression.features.push_back(Feature::running_h1);
                    else if (s == "running_h")
                        cfg.regression.features.push_back(Feature::running_h);
                    else if (s == "running_max")
                        cfg.regression.features.push_back(Feature::running_max);
                    else
                        throw ConfigError("unknown regression feature '" + s + "'");
                }
            }
            const auto est = r.value("estimator", std::string("automatic"));
            if (est == "automatic")
                cfg.regression.estimator = Estimator::automatic;
            else if (est == "terminal_projection")
                cfg.regression.estimator = Estimator::terminal_projection;
            else if (est == "log_recursion")
                cfg.regression.estimator = Estimator::log_recursion;
            else
                throw ConfigError("unknown regression.estimator '" + est + "'");
        }

        // pde
        if (root.contains("pde")) {
            const auto& p = root.at("pde");
            PdeConfig pc;
            if (p.contains("x_min"))
                pc.x_min = detail::number(p.at("x_min"), "pde.x_min");
            if (p.contains("x_max"))
                pc.x_max = detail::number(p.at("x_max"), "pde.x_max");
            if (p.contains("n_x"))
                pc.n_x = detail::count(p.at("n_x"), "pde.n_x");
            if (p.contains("n_t"))
                pc.n_t = detail::count(p.at("n_t"), "pde.n_t");
            const auto scheme = p.value("scheme", std::string("central"));
            if (scheme == "upwind")
                pc.scheme = AdvectionScheme::upwind;
            else if (scheme != "central")
                throw ConfigError("unknown pde.scheme '" + scheme + "'");
            if (pc.n_x < 50 || pc.n_t < 50)
                throw ConfigError("pde: n_x and n_t must be at least 50");
            if (pc.x_min && pc.x_max && !(*pc.x_min < *pc.x_max))
                throw ConfigError("pde: x_min must be below x_max");
            cfg.pde = pc;
        }

        // outputs
        if (root.contains("outputs")) {
            const auto& o = root.at("outputs");
            cfg.out_dir = o.value("directory", cfg.out_dir);
            if (o.contains("formats"))
                cfg.formats = o.at("formats").get<std::vector<std::string>>();
            if (o.contains("panel_max_paths"))
                cfg.panel_max_paths = detail::count(o.at("panel_max_paths"), "outputs.panel_max_paths");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

inline DiffusionSpec make_model(const RunConfig& cfg) {
    if (cfg.model.name == "gbm_log")
        return gbm_log(cfg.model.mu, cfg.model.sigma, cfg.model.x0);
    return arithmetic_bm(cfg.model.mu, cfg.model.sigma, cfg.model.x0);
}

inline Divergence make_divergence(const RunConfig& cfg) {
    if (cfg.divergence.name == "chi2")
        return divergences::chi_squared();
    if (cfg.divergence.name == "scaled_kl")
        return divergences::scaled_kl(cfg.divergence.d);
    return divergences::kl();
}

inline LossSpec make_loss(const RunConfig& cfg) {
    const auto& n = cfg.loss.name;
    if (n == "terminal_identity")
        return losses::terminal_identity();
    if (n == "terminal_call")
        return losses::terminal_call(cfg.loss.strike);
    if (n == "asian_integral")
        return losses::asian_integral(cfg.t_end);
    if (n == "running_max")
        return losses::running_max();
    throw ConfigError("loss '" + n + "' is not a path functional");
}

} // namespace robustrisk::report
