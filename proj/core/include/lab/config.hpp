#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace lab {

/// Parses the TOML subset used by experiment configs: `[table]` headers,
/// `key = value` with basic or literal strings, integers, floats, booleans
/// and (possibly multi-line) arrays of those, and `#` comments. Throws
/// lab::Error with a line number on malformed input.
nlohmann::json parse_toml(std::string_view text);

inline constexpr std::string_view kBackendEnv = "LAB_BACKEND_URL";

const std::vector<std::string>& experiment_ids();

struct ConfigCheck {
    std::optional<nlohmann::json> config;  // normalized, when errors is empty
    std::vector<std::string> errors;       // each names the offending key

    bool ok() const { return errors.empty(); }
};

/// Fills defaults and rejects unknown keys. `backend_override` replaces the
/// configured backend (the LAB_BACKEND_URL value).
ConfigCheck normalize_config(const nlohmann::json& raw, const std::optional<std::string>& backend_override = {});

/// Reads, parses and normalizes a config file, applying LAB_BACKEND_URL
/// from the environment. Parse failures land in `errors`.
ConfigCheck validate_config(const std::filesystem::path& path);

/// SHA-256 of the canonical JSON dump (sorted keys, no whitespace). The
/// runner hashes the normalized config without `output_dir`.
std::string config_hash(const nlohmann::json& normalized);

}  // namespace lab
