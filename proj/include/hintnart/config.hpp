#pragma once

#include <string>

#include "hintnart/data.hpp"
#include "hintnart/inference.hpp"
#include "hintnart/training.hpp"

namespace hintnart {

// One flat configuration for every subcommand: "[section]" headers group
// "key = value" lines; '#' starts a comment; unknown sections or keys are
// errors.
struct RunConfig {
  SyntheticTaskSpec data;
  ModelConfig model;
  TrainConfig train;
  InferenceConfig inference;
  bool length_bias_auto = true;  // derive C from the training corpus

  void validate() const;
};

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig parse_config_file(const std::string& path);
void apply_config_override(RunConfig& cfg, const std::string& section, const std::string& key,
                           const std::string& value);

// Canonical dump of every key with current values; parses back identically.
std::string dump_config(const RunConfig& cfg);

}  // namespace hintnart
