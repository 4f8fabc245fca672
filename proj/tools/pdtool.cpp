#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pdopt/checks.hpp"
#include "pdopt/config.hpp"
#include "pdopt/runner.hpp"

int main(int argc, char** argv) {
    CLI::App app{"pdtool - primal-dual optimization experiment runner"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
    auto* run = app.add_subcommand("run", "run experiments from a JSON config");
    run->add_option("config", config_path, "configuration file (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    run->add_option("--out", out_dir, "output directory for traces");
    std::uint64_t seed_value = 0;
    auto* seed_opt = run->add_option("--seed", seed_value,
                                     "override the config seed");

    std::string filter;
    auto* check = app.add_subcommand("check", "run the invariant suites");
    check->add_option("--filter", filter,
                      "restrict to one module (graph, oracle, saddle, "
                      "consensus, dynamics, fedsim, energysim, harness)");

    auto* schema = app.add_subcommand("schema", "print the config schema");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*schema) {
            std::cout << pdopt::config_schema();
            return 0;
        }
        if (*check) {
            auto results = pdopt::run_checks(filter);
            if (results.empty()) {
                std::cerr << "no checks matched filter '" << filter << "'\n";
                return 1;
            }
            bool all = true;
            for (const auto& r : results) {
                std::cout << (r.pass ? "PASS" : "FAIL") << "  [" << r.module
                          << "] " << r.name << "  (" << r.detail << ")\n";
                all = all && r.pass;
            }
            std::cout << (all ? "all checks passed" : "some checks FAILED")
                      << "\n";
            return all ? 0 : 1;
        }
        // run
        if (seed_opt->count() > 0) seed = seed_value;
        pdopt::json doc = pdopt::load_config_file(config_path);
        auto outcomes = pdopt::run_config(doc, out_dir, seed);
        int exit_code = 0;
        for (const auto& o : outcomes) {
            for (const auto& f : o.files) std::cout << "wrote " << f << "\n";
            for (const auto& fl : o.flags)
                std::cout << "flag: " << fl << "\n";
            if (!o.error.empty()) std::cerr << "error: " << o.error << "\n";
            exit_code = std::max(exit_code, o.exit_code);
        }
        return exit_code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
