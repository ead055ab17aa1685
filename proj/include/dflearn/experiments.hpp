#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dflearn/io.hpp"

namespace dflearn::experiments {

// Thrown for malformed configuration; mapped to exit code 2 by the CLI.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a computation fails numerically; mapped to exit code 3.
class NumericalError : public std::runtime_error {
  public:
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

struct ExperimentConfig {
    std::string command;
    nlohmann::json options = nlohmann::json::object();
    std::string out_dir = ".";
    std::uint64_t seed = 1;
    int jobs = 1;
    double scale = 1.0;  // multiplies chain counts of the built-in defaults
    bool full = false;   // full-size reproduction instead of desk scale

    double get_number(const std::string& key, double fallback) const;
    int get_int(const std::string& key, int fallback) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
};

// FNV-1a of the canonical serialised config; recorded in the manifest.
std::string config_hash(const nlohmann::json& config);

// Runs one subcommand, writing outputs and a manifest.json under the output
// directory.  Returns the manifest.
nlohmann::json run_experiment(const ExperimentConfig& cfg);

std::vector<std::string> known_commands();

}  // namespace dflearn::experiments
