#pragma once

#include <nlohmann/json.hpp>

#include "marl/env/micro_battle.hpp"

namespace marl::env {

// Missing keys keep their defaults; unknown keys are rejected.
void to_json(nlohmann::json& j, const UnitStats& s);
void from_json(const nlohmann::json& j, UnitStats& s);
void to_json(nlohmann::json& j, const EnvConfig& c);
void from_json(const nlohmann::json& j, EnvConfig& c);

}  // namespace marl::env
