#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sddr/engine.hpp"

namespace sddr {

/// Contents of a `fit` config file. Relative paths resolve against the config's directory.
struct RunConfig {
    std::string family;
    std::vector<std::string> formulas;
    std::map<std::string, TrunkSpec> trunks;
    FitConfig fit;
    bool warm_start = false;   // fit the structured part alone first
    std::optional<std::filesystem::path> data;
    std::optional<std::filesystem::path> model;
    std::optional<std::filesystem::path> out;

    ModelSpec spec() const;
};

/// Validates every key before anything runs; unknown keys are rejected by name.
RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Entry point of the `sddr` tool. `args` excludes the program name. Returns the
/// exit code: 0 success, 1 user error, 2 numerical failure, 3 internal error.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sddr
