// Command-line driver:
//   snde <command> --config <path> [--seed N] [--gamma X] [--out DIR]
// Commands: generate, train, eval, sweep-gamma, measure, report.
// Exit codes: 0 success, 1 usage/config error, 2 runtime failure.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "snde/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"stabilized neural ODE experiments"};
    app.require_subcommand(1);

    std::string config_path;
    long long seed = -1;
    double gamma = -1.0;
    std::string out_dir;

    const char* names[] = {"generate", "train", "eval", "sweep-gamma", "measure", "report"};
    for (const char* n : names) {
        auto* sub = app.add_subcommand(n);
        sub->add_option("--config", config_path, "experiment config file");
        sub->add_option("--seed", seed, "override the run seed");
        sub->add_option("--gamma", gamma, "override the stabilization strength");
        sub->add_option("--out", out_dir, "override the output directory");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    snde::ExperimentConfig cfg;
    try {
        if (!config_path.empty()) cfg = snde::parse_config(config_path);
        if (seed >= 0) cfg.training.seed = static_cast<std::uint64_t>(seed);
        if (gamma >= 0.0) cfg.training.gamma = gamma;
        if (!out_dir.empty()) cfg.out_dir = out_dir;
        cfg.training.validate();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    return snde::run_command(app.get_subcommands()[0]->get_name(), cfg);
}
