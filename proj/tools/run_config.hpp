#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace confdepth::cli {

/// Resolved configuration of one command: built-in defaults, then the JSON
/// file, then --key=value flags (dotted keys reach into nested objects).
struct RunConfig {
    std::string command;
    nlohmann::json values;
    std::filesystem::path out;
    bool force = false;
};

RunConfig resolve_config(const std::string& command, const nlohmann::json& defaults,
                         const std::vector<std::string>& optional_keys, const std::string& config_path,
                         const std::vector<std::string>& overrides);

/// Value of a required field, with the field path in the error message.
const nlohmann::json& require(const RunConfig& cfg, const std::string& key);

/// Creates `cfg.out`, refusing a non-empty directory unless --force was given.
void prepare_output(const RunConfig& cfg);

/// Writes the config echo used for replay. The output path is not part of it.
void write_echo(const RunConfig& cfg);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace confdepth::cli
