#include <cstdint>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rqdyn/experiments.hpp"

int main(int argc, char** argv) {
    CLI::App app{"renewal-event open-system dynamics toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    rqdyn::RunOptions opts;
    std::uint64_t seed = 0;

    auto* run = app.add_subcommand("run", "run an experiment from a JSON config");
    run->add_option("--config", config_path, "path to the JSON config")->required();
    run->add_option("--out", opts.out_override, "override the config's output path");
    run->add_option("--threads", opts.threads, "worker thread count (0 = hardware)");
    auto* seed_opt =
        run->add_option("--seed-override", seed, "override the ensemble seed");

    auto* list = app.add_subcommand("list", "list the available experiments");
    bool machine = false;
    list->add_flag("--machine", machine, "one name per line, no descriptions");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (list->parsed()) {
        for (const auto& [name, desc] : rqdyn::experiment_catalog()) {
            if (machine)
                std::cout << name << "\n";
            else
                std::cout << name << "\t" << desc << "\n";
        }
        return 0;
    }

    if (seed_opt->count() > 0) opts.seed_override = seed;
    try {
        return rqdyn::run_experiment(config_path, opts);
    } catch (const rqdyn::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const rqdyn::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "numerical guard: " << e.what() << "\n";
        return 3;
    }
}
