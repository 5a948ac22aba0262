#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "marl/advpolicy/adversary.hpp"
#include "marl/env/micro_battle.hpp"
#include "marl/qmix/train.hpp"

namespace marl::harness {

// Everything needed to reproduce the team and its adversaries from scratch.
// JSON form: {schema_version, env, team, adversary, victim, seed}; missing
// sections keep the defaults below.
struct Scenario {
  env::EnvConfig env;
  qmix::TrainConfig team;
  advpolicy::AdvTrainConfig adversary;
  int victim = 2;
  std::uint64_t seed = 42;
};

// The tuned defaults used by the CLI and the acceptance run.
Scenario default_scenario();

void to_json(nlohmann::json& j, const Scenario& s);
void from_json(const nlohmann::json& j, Scenario& s);
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace marl::harness
