// run_config.hpp - flat key=value run configuration files

#pragma once

#include <string>

#include "airmoe/trainer.hpp"

namespace airmoe {

// Parses a key=value config ('#' comments and blank lines allowed). Unknown
// keys are rejected with InvalidConfigError. Missing keys keep their defaults.
TrainConfig parse_run_config(const std::string& text);

TrainConfig load_run_config(const std::string& path);

// Emits every key in a fixed order with full precision, so
// parse_run_config(serialize_run_config(c)) == c.
std::string serialize_run_config(const TrainConfig& cfg);

}  // namespace airmoe
