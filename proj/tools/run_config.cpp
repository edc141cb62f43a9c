#include "run_config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "confdepth/errors.hpp"

namespace confdepth::cli {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json parse_scalar(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        return text;
    }
}

void apply_override(json& root, const std::string& flag) {
    std::string body = flag;
    if (body.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + flag + "'");
    body.erase(0, 2);
    const auto eq = body.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + flag + "' must have the form --key=value");
    }
    const std::string key = body.substr(0, eq);
    const std::string value = body.substr(eq + 1);

    json* node = &root;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override '" + flag + "' has an empty key segment");
        if (dot == std::string::npos) {
            (*node)[part] = parse_scalar(value);
            return;
        }
        json& child = (*node)[part];
        if (child.is_null()) child = json::object();
        if (!child.is_object()) {
            throw ConfigError("override '" + flag + "': '" + key.substr(0, dot) + "' is not an object");
        }
        node = &child;
        start = dot + 1;
    }
}

}  // namespace

RunConfig resolve_config(const std::string& command, const json& defaults, const std::vector<std::string>& optional_keys,
                         const std::string& config_path, const std::vector<std::string>& overrides) {
    RunConfig cfg;
    cfg.command = command;
    cfg.values = defaults;
    if (!config_path.empty()) {
        std::ifstream in(config_path, std::ios::binary);
        if (!in) throw IoError("cannot open config '" + config_path + "'");
        std::stringstream text;
        text << in.rdbuf();
        json file;
        try {
            file = json::parse(text.str());
        } catch (const json::parse_error& e) {
            throw ConfigError("config '" + config_path + "': " + e.what());
        }
        if (!file.is_object()) throw ConfigError("config '" + config_path + "' must hold a JSON object");
        if (file.contains("command")) {
            if (file["command"] != command) {
                throw ConfigError("config '" + config_path + "' echoes command '" +
                                  file["command"].get<std::string>() + "', not '" + command + "'");
            }
            file.erase("command");
        }
        cfg.values.merge_patch(file);
    }
    for (const auto& flag : overrides) apply_override(cfg.values, flag);

    for (const auto& [key, value] : cfg.values.items()) {
        const bool known = defaults.contains(key) ||
                           std::find(optional_keys.begin(), optional_keys.end(), key) != optional_keys.end();
        if (!known) throw ConfigError(command + ": unknown config key '" + key + "'");
    }
    return cfg;
}

const json& require(const RunConfig& cfg, const std::string& key) {
    if (!cfg.values.contains(key) || cfg.values.at(key).is_null()) {
        throw ValidationError(cfg.command + ": config." + key + " is required");
    }
    return cfg.values.at(key);
}

void prepare_output(const RunConfig& cfg) {
    if (cfg.out.empty()) throw ConfigError(cfg.command + ": --out is required");
    if (fs::exists(cfg.out)) {
        if (!fs::is_directory(cfg.out)) throw ConfigError("output '" + cfg.out.string() + "' is not a directory");
        if (!fs::is_empty(cfg.out) && !cfg.force) {
            throw ConfigError("output directory '" + cfg.out.string() + "' is not empty; pass --force to reuse it");
        }
    }
    fs::create_directories(cfg.out);
}

void write_echo(const RunConfig& cfg) {
    json echo = cfg.values;
    echo["command"] = cfg.command;
    write_text(cfg.out / "config.json", echo.dump(2) + "\n");
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

}  // namespace confdepth::cli
