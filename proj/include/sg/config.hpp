#pragma once

#include <string>

#include <json.hpp>

#include "sg/datagen.hpp"
#include "sg/losses.hpp"
#include "sg/metrics.hpp"
#include "sg/model.hpp"
#include "sg/streaming.hpp"
#include "sg/trainer.hpp"

namespace sg {

// JSON round-trips. Parsing is strict: unknown keys raise ConfigError (the
// usual failure is a typo that would otherwise silently fall back to a
// default); absent keys keep their defaults.
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);
void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);
void to_json(nlohmann::json& j, const SyntheticSpec& c);
void from_json(const nlohmann::json& j, SyntheticSpec& c);
void to_json(nlohmann::json& j, const DecayConfig& c);
void from_json(const nlohmann::json& j, DecayConfig& c);

// Everything a CLI run needs, in one file with one section per module.
struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  TrainConfig train;
  SyntheticSpec data;
  DecayConfig decay;

  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

// Empty path → defaults. Malformed file → ConfigError; missing → IoError.
RunConfig load_run_config(const std::string& path);

// Applies one `--set section.key=value` override onto the raw JSON before
// parsing. The value is parsed as a JSON literal, falling back to a string.
void apply_override(nlohmann::json& j, const std::string& assignment);

// The exact configuration a run resolved to, written next to its outputs.
void write_resolved_config(const RunConfig& c, const std::string& path);

}  // namespace sg
