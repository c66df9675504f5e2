#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "copiv/serialize.hpp"

namespace copiv {

// Command-line flags that override keys of the JSON configuration.
struct CliOverrides {
    std::string config;                  // path; empty means an empty configuration
    std::string input;
    std::string output_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::optional<int> bootstrap;        // B
    std::optional<double> alpha;
};

json load_config(const CliOverrides& cli);

// Each command resolves defaults, writes its artifacts to config["output_dir"]
// and returns a short summary. Errors propagate as copiv::Error.
json cmd_estimate(const json& config);
json cmd_simulate(const json& config);
json cmd_coverage(const json& config);
json cmd_check(const json& config);

int exit_code(const std::exception& e);

}  // namespace copiv
