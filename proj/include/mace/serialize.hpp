#pragma once

#include <string>

#include <json.hpp>

#include "mace/model.hpp"

namespace mace {

// JSON artifacts are self-describing and round-trip doubles exactly.
// format_version guards against loading artifacts from a different layout.
inline constexpr int kArtifactVersion = 1;

nlohmann::json forest_to_json(const Forest& f);
Forest forest_from_json(const nlohmann::json& j);

nlohmann::json model_to_json(const MaceModel& m);
MaceModel model_from_json(const nlohmann::json& j);

nlohmann::json bag_to_json(const BagOfStrategies& bag);
BagOfStrategies bag_from_json(const nlohmann::json& j);

void save_json(const std::string& path, const nlohmann::json& j);
nlohmann::json load_json(const std::string& path);

// enum <-> config-token mapping shared by artifacts and run configs
std::string to_token(StoppingRule v);
std::string to_token(FeatureMode v);
std::string to_token(InitMode v);
StoppingRule stopping_from_token(const std::string& s);
FeatureMode mode_from_token(const std::string& s);
InitMode init_from_token(const std::string& s);

}  // namespace mace
