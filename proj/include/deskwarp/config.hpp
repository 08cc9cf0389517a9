#pragma once

#include "deskwarp/eval.hpp"
#include "deskwarp/infer.hpp"
#include "deskwarp/train.hpp"

#include <nlohmann/json.hpp>

#include <string>

namespace dw {

using json = nlohmann::json;

// Serialization of every config struct. Readers only touch keys that are
// present and reject keys they do not know, so a partial object overrides
// defaults.
void to_json(json& j, const DenoiserConfig& c);
void from_json(const json& j, DenoiserConfig& c);
void to_json(json& j, const TrajectoryOptions& c);
void from_json(const json& j, TrajectoryOptions& c);
void to_json(json& j, const InferenceNoiseConfig& c);
void from_json(const json& j, InferenceNoiseConfig& c);
void to_json(json& j, const CacheConfig& c);
void from_json(const json& j, CacheConfig& c);
void to_json(json& j, const SessionConfig& c);
void from_json(const json& j, SessionConfig& c);
void to_json(json& j, const TrainConfig& c);
void from_json(const json& j, TrainConfig& c);
void to_json(json& j, const PoseRecoveryOptions& c);
void from_json(const json& j, PoseRecoveryOptions& c);
void to_json(json& j, const AblationConfig& c);
void from_json(const json& j, AblationConfig& c);

/// A JSON object, or flat `section.key = value` lines where '#' starts a
/// comment and values are JSON literals or bare strings.
json parse_config_text(const std::string& text);
json load_config_file(const std::string& path);

/// Sets a dotted path such as "train.steps" inside `j`.
void set_dotted(json& j, const std::string& path, const json& value);

/// Resolved configuration plus provenance, written as run.json.
struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  json config;
};

std::string version_string();
void write_run_config(const std::string& dir, const RunConfig& rc);

}  // namespace dw
