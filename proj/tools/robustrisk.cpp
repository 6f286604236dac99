// Batch front end: robustrisk <measure|sweep|process|pde|all> --config <file>.
//
// Exit codes: 0 success, 2 configuration or argument error, 3 numerical
// failure. Failures print one line "robustrisk: error code=<n> kind=<k>
// message=<json string>" to stderr.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <utility>

#include <CLI11.hpp>

#include "robustrisk/report/commands.hpp"

namespace rr = robustrisk;
namespace rp = robustrisk::report;

namespace {

int fail(int code, const char* kind, const std::string& msg) {
    std::cerr << "robustrisk: error code=" << code << " kind=" << kind
              << " message=" << nlohmann::json(msg).dump() << "\n";
    return code;
}

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw rr::ConfigError("cannot read config file '" + path + "'");
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Worst-case expected loss under f-divergence model uncertainty"};
    app.require_subcommand(1, 1);
    std::string config_path, out_dir;
    unsigned threads = 1;
    std::optional<std::uint64_t> seed;
    const std::pair<const char*, const char*> verbs[] = {
        {"measure", "U0, V0, eta0 and c per theta"},
        {"sweep", "theta frontier with per-point status"},
        {"process", "conditional processes along paths, with diagnostics"},
        {"pde", "finite-difference route and cross-check against Monte Carlo"},
        {"all", "every command applicable to the configuration"}};
    for (const auto& [verb, about] : verbs) {
        auto* sub = app.add_subcommand(verb, about);
        sub->add_option("--config", config_path, "run configuration (JSON)")->required();
        sub->add_option("--out", out_dir, "output directory (overrides outputs.directory)");
        sub->add_option("--threads", threads, "worker threads; never changes results")
            ->check(CLI::Range(1u, 1024u));
        sub->add_option("--seed", seed, "override mc.seed");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail(2, "argument", e.what());
    }
    const std::string verb = app.get_subcommands().front()->get_name();

    try {
        rp::RunContext ctx;
        ctx.config_text = read_file(config_path);
        ctx.config = rp::parse_config(ctx.config_text);
        if (seed)
            ctx.config.seed = *seed;
        ctx.out_dir = out_dir.empty() ? ctx.config.out_dir : out_dir;
        ctx.threads = threads;
        ctx.timestamp = rp::utc_timestamp();

        rp::ResultManifest man;
        man.config_digest = rp::sha256_hex(ctx.config_text);
        man.seed = ctx.config.seed;
        man.threads = threads;
        man.started = ctx.timestamp;
        if (verb == "measure")
            man.commands.push_back(rp::cmd_measure(ctx));
        else if (verb == "sweep")
            man.commands.push_back(rp::cmd_sweep(ctx));
        else if (verb == "process")
            man.commands.push_back(rp::cmd_process(ctx));
        else if (verb == "pde")
            man.commands.push_back(rp::cmd_pde(ctx));
        else
            man.commands = rp::cmd_all(ctx);
        man.finished = rp::utc_timestamp();
        rp::write_atomic(ctx.out_dir / "manifest.json", man.to_json().dump(2) + "\n");

        for (const auto& c : man.commands)
            for (const auto& h : c.headline)
                std::printf("%s theta=%s c=%s U0=%s V0=%s eta0=%s\n", c.command.c_str(),
                            rp::format_double(h.theta).c_str(), rp::format_double(h.c).c_str(),
                            rp::format_double(h.U0).c_str(), rp::format_double(h.V0).c_str(),
                            rp::format_double(h.eta0).c_str());
        return 0;
    } catch (const rr::ConfigError& e) {
        return fail(2, "config", e.what());
    } catch (const rr::ArgumentError& e) {
        return fail(2, "argument", e.what());
    } catch (const rr::CalibrationError& e) {
        return fail(3, "calibration", e.what());
    } catch (const rr::PdeError& e) {
        return fail(3, "pde", e.what());
    } catch (const rr::Error& e) {
        return fail(3, "numerical", e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(3, "io", e.what());
    }
}
