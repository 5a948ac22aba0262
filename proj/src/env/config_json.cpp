#include "marl/env/config_json.hpp"

#include <set>
#include <stdexcept>

namespace marl::env {

namespace {

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known,
                    const char* what) {
  for (const auto& [key, _] : j.items())
    if (!known.contains(key))
      throw std::invalid_argument(std::string("unknown ") + what + " key: " + key);
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(nlohmann::json& j, const UnitStats& s) {
  j = {{"max_health", s.max_health},
       {"damage", s.damage},
       {"attack_range", s.attack_range},
       {"cooldown", s.cooldown}};
}

void from_json(const nlohmann::json& j, UnitStats& s) {
  reject_unknown(j, {"max_health", "damage", "attack_range", "cooldown"},
                 "unit stats");
  read(j, "max_health", s.max_health);
  read(j, "damage", s.damage);
  read(j, "attack_range", s.attack_range);
  read(j, "cooldown", s.cooldown);
}

void to_json(nlohmann::json& j, const EnvConfig& c) {
  j = {{"width", c.width},
       {"height", c.height},
       {"n_ally_ranged", c.n_ally_ranged},
       {"n_ally_melee", c.n_ally_melee},
       {"n_enemy_ranged", c.n_enemy_ranged},
       {"n_enemy_melee", c.n_enemy_melee},
       {"sight_range", c.sight_range},
       {"episode_limit", c.episode_limit},
       {"ally_ranged", c.ally_ranged},
       {"ally_melee", c.ally_melee},
       {"enemy_ranged", c.enemy_ranged},
       {"enemy_melee", c.enemy_melee},
       {"kill_bonus", c.kill_bonus},
       {"win_bonus", c.win_bonus},
       {"reward_cap", c.reward_cap},
       {"spawn_depth", c.spawn_depth},
       {"spawn_rows", c.spawn_rows},
       {"spawn_gap", c.spawn_gap},
       {"obs_version", kObsVersion}};
}

void from_json(const nlohmann::json& j, EnvConfig& c) {
  reject_unknown(j,
                 {"width", "height", "n_ally_ranged", "n_ally_melee",
                  "n_enemy_ranged", "n_enemy_melee", "sight_range",
                  "episode_limit", "ally_ranged", "ally_melee", "enemy_ranged",
                  "enemy_melee", "kill_bonus", "win_bonus", "reward_cap",
                  "spawn_depth", "spawn_rows", "spawn_gap", "obs_version"},
                 "env config");
  if (j.contains("obs_version") && j.at("obs_version").get<int>() != kObsVersion)
    throw std::invalid_argument("env config: unsupported obs_version");
  read(j, "width", c.width);
  read(j, "height", c.height);
  read(j, "n_ally_ranged", c.n_ally_ranged);
  read(j, "n_ally_melee", c.n_ally_melee);
  read(j, "n_enemy_ranged", c.n_enemy_ranged);
  read(j, "n_enemy_melee", c.n_enemy_melee);
  read(j, "sight_range", c.sight_range);
  read(j, "episode_limit", c.episode_limit);
  read(j, "ally_ranged", c.ally_ranged);
  read(j, "ally_melee", c.ally_melee);
  read(j, "enemy_ranged", c.enemy_ranged);
  read(j, "enemy_melee", c.enemy_melee);
  read(j, "kill_bonus", c.kill_bonus);
  read(j, "win_bonus", c.win_bonus);
  read(j, "reward_cap", c.reward_cap);
  read(j, "spawn_depth", c.spawn_depth);
  read(j, "spawn_rows", c.spawn_rows);
  read(j, "spawn_gap", c.spawn_gap);
}

}  // namespace marl::env
