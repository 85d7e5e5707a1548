#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "mts/trainer.hpp"

namespace mts {

// Schema-versioned run configuration file (JSON). Every key has a documented
// default; unknown keys are rejected with the offending paths listed.
constexpr int kRunConfigSchema = 1;

nlohmann::json default_run_config();

// Loads a config file and merges it over the defaults. An empty path returns
// the defaults.
nlohmann::json load_run_config(const std::string& path);

// "dotted.key=value" override with the value parsed against the default's
// type; unknown keys are rejected.
void apply_override(nlohmann::json& config, const std::string& assignment);

TrainConfig train_config_from_json(const nlohmann::json& config);

}  // namespace mts
