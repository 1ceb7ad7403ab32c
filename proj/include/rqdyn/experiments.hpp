#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "rqdyn/response.hpp"

namespace rqdyn {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunOptions {
    std::string out_override;  // empty: use the config's output path
    unsigned threads = 0;      // 0: hardware concurrency
    std::optional<std::uint64_t> seed_override;
};

/// Runs the experiment described by the JSON config file. Returns 0 on
/// success, 1 when a validation experiment reports failures. Schema errors
/// throw ConfigError, numerical guard trips throw std::domain_error /
/// std::runtime_error / std::invalid_argument, and I/O problems throw IoError.
int run_experiment(const std::string& config_path, const RunOptions& opts);

/// (name, one-line description) for every experiment.
std::vector<std::pair<std::string, std::string>> experiment_catalog();

std::uint64_t fnv1a64(std::string_view data);

}  // namespace rqdyn
