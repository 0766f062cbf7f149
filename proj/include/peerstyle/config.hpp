#pragma once

// YAML form of the training configuration. Unknown keys are errors so that
// typos do not silently fall back to defaults.

#include <filesystem>
#include <stdexcept>
#include <string>

#include "peerstyle/training.hpp"

namespace peerstyle {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Starts from the desk defaults and applies the document's keys.
TrainConfig parse_train_config(const std::string& yaml);
TrainConfig load_train_config(const std::filesystem::path& path);
/// Complete, re-parseable form of every field.
std::string to_yaml(const TrainConfig& config);

}  // namespace peerstyle
