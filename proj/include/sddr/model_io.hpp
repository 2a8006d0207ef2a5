#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "sddr/engine.hpp"

namespace sddr {

inline constexpr int kModelSchemaVersion = 1;

/// Throws UserError naming the first key of `j` that is not in `allowed`.
void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where);

nlohmann::json config_to_json(const FitConfig& config);
/// Reads the optimizer, smoothing and design settings; unknown keys are rejected.
FitConfig config_from_json(const nlohmann::json& j);

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const FittedModel& model);
FittedModel model_from_json(const nlohmann::json& j);

/// Loss trace, per-block smoothing, orthogonality residual and counters.
nlohmann::json diagnostics_to_json(const TrainingDiagnostics& diagnostics);

std::string serialize_model(const FittedModel& model);
FittedModel deserialize_model(const std::string& text);

void save_model(const FittedModel& model, const std::string& path);
FittedModel load_model(const std::string& path);

}  // namespace sddr
