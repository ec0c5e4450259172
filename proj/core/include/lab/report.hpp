#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "lab/elements.hpp"
#include "lab/runner.hpp"

namespace lab {

std::string_view software_version();

/// Backend named by a normalized config: the toy transformer, the planted
/// runner, or an HttpRunner for an http:// URL.
std::unique_ptr<Runner> make_backend(const nlohmann::json& config, const ElementTable& table);

struct RunOutcome {
    std::filesystem::path output_dir;
    nlohmann::json manifest;
    bool partial = false;
};

/// Runs one experiment from a normalized config and writes its artifacts
/// plus manifest.json into the output directory. The directory is locked
/// (`.lock`) for the duration of the run. Failures after the directory is
/// set up are recorded in the manifest as partial and then rethrown.
RunOutcome run_experiment(const nlohmann::json& config);

}  // namespace lab
