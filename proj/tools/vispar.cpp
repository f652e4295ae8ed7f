// vispar <solve|cascade|verify|regularity> --config FILE [--out DIR] [--threads N] [--seed N]

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "vispar/vispar.hpp"

namespace {

int execute(vispar::Subcommand sub, const std::string& path, const vispar::RunOptions& options) {
    std::ifstream is(path);
    if (!is) {
        std::cerr << "error: cannot read config '" << path << "'\n";
        return vispar::kExitConfig;
    }
    std::stringstream text;
    text << is.rdbuf();
    vispar::RunConfig config;
    try {
        config = vispar::parse_config(text.str());
    } catch (const vispar::ConfigError& e) {
        for (const auto& m : e.errors()) std::cerr << "config error: " << m << "\n";
        return vispar::kExitConfig;
    }
    const vispar::RunReport r = vispar::run(sub, config, options);
    for (const auto& d : r.digests) std::cout << d << "\n";
    for (const auto& a : r.assertions)
        std::cout << (a.passed ? "PASS " : "FAIL ") << a.name << ": " << a.measured << " (tolerance " << a.tolerance
                  << ")" << (a.detail.empty() ? "" : " " + a.detail) << "\n";
    for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& a : r.artifacts) std::cout << "wrote " << a << "\n";
    if (!r.error.empty()) std::cerr << "error: " << r.error << "\n";
    return r.exit_status;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Finite-difference solver for degenerate fully nonlinear parabolic equations"};
    app.require_subcommand(1);

    std::string config;
    std::string out;
    std::size_t threads = 0;
    std::uint64_t seed = 0;
    int status = 0;

    for (auto sub : {vispar::Subcommand::Solve, vispar::Subcommand::Cascade, vispar::Subcommand::Verify,
                     vispar::Subcommand::Regularity}) {
        auto* cmd = app.add_subcommand(vispar::to_string(sub));
        cmd->add_option("--config", config, "INI run configuration")->required()->check(CLI::ExistingFile);
        cmd->add_option("--out", out, "artifact directory (overrides [output] dir)");
        cmd->add_option("--threads", threads, "worker threads (default: $VISPAR_THREADS or 1)");
        cmd->add_option("--seed", seed, "seed for random boundary data");
        cmd->callback([&, sub, cmd] {
            vispar::RunOptions options;
            if (!out.empty()) options.out_dir = out;
            options.threads = threads;
            if (cmd->count("--seed") > 0) options.seed = seed;
            status = execute(sub, config, options);
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : vispar::kExitConfig;
    }
    return status;
}
