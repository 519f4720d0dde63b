#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "dflmoe/federation.hpp"

namespace dflmoe {

/// The config file is a JSON tree mirroring ExperimentConfig. Every field
/// has a default; unknown keys are rejected with their full path.
nlohmann::json default_config_json();

/// Overlays `text` onto the defaults and builds the runtime config.
/// ConfigInvalid names the offending field.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

/// Fully resolved config (defaults applied) for embedding into outputs;
/// re-parsing it reproduces the same experiment.
nlohmann::json resolved_config_json(const ExperimentConfig& config);

}  // namespace dflmoe
