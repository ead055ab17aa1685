#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dflearn/experiments.hpp"

namespace {

using dflearn::experiments::ConfigError;
using dflearn::experiments::ExperimentConfig;
using dflearn::experiments::NumericalError;

int fail(const std::string& type, const std::string& message, int code) {
    nlohmann::json err{{"error", {{"type", type}, {"message", message}}}};
    std::cout << err.dump(2) << std::endl;
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"decoherence-free subspace learner"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    ExperimentConfig cfg;
    app.add_option("--config", config_path, "JSON file with command options");
    app.add_option("--seed", cfg.seed, "base random seed")->envname("DFLEARN_SEED");
    app.add_option("--jobs", cfg.jobs, "worker threads for scans");
    app.add_option("--out", cfg.out_dir, "output directory")->envname("DFLEARN_OUT");
    app.add_option("--scale", cfg.scale, "multiplier on default chain counts");
    app.add_flag("--full", cfg.full, "run at full published size instead of desk scale");

    for (const auto& name : dflearn::experiments::known_commands())
        app.add_subcommand(name)->silent(false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return fail("config", e.what(), 2);
    }

    cfg.command = app.get_subcommands().front()->get_name();
    if (!config_path.empty()) {
        std::ifstream in(config_path);
        if (!in) return fail("config", "cannot open config file " + config_path, 2);
        try {
            in >> cfg.options;
        } catch (const std::exception& e) {
            return fail("config", std::string("invalid config JSON: ") + e.what(), 2);
        }
        if (!cfg.options.is_object())
            return fail("config", "config file must hold a JSON object", 2);
    }

    try {
        const nlohmann::json manifest = dflearn::experiments::run_experiment(cfg);
        std::cout << manifest.dump(2) << std::endl;
        return 0;
    } catch (const ConfigError& e) {
        return fail("config", e.what(), 2);
    } catch (const std::invalid_argument& e) {
        return fail("config", e.what(), 2);
    } catch (const nlohmann::json::exception& e) {
        return fail("config", e.what(), 2);
    } catch (const NumericalError& e) {
        return fail("numerical", e.what(), 3);
    } catch (const std::exception& e) {
        return fail("numerical", e.what(), 3);
    }
}
