#pragma once

// MicroBattle: a small deterministic grid skirmish. N ally agents with partial
// observations fight a scripted enemy team. Positions are integer grid cells,
// distances are Chebyshev.
//
// Observation layout (version 1, 96 features, each in [-1, 1]):
//   [0, 4)    movement availability N, S, E, W
//   [4, 44)   one 8-wide block per enemy slot, enemy order
//   [44, 76)  one 8-wide block per other-ally slot, ally order skipping self
//   [76, 81)  own: health fraction, weapon cooling, x, y, is_ranged
//   [81, 86)  agent id one-hot
//   [86, 96)  zero padding
// Unit block: visible, dx / sight, dy / sight, distance / sight,
//             health fraction, is_ranged, weapon cooling, within own attack
//             range (enemies: also alive, i.e. attackable ignoring cooldown).
// Offsets are fixed: smaller teams leave their unused slots zero.
// A unit outside sight range (or dead) leaves its block all zero. A dead agent
// observes all zeros and may only take the no-op.
//
// Action ids: 0 no-op, 1 stop, 2..5 move N/S/E/W, 6 + k attack enemy k.
//
// Step resolution order: validation → movement → attacks (simultaneous,
// targets locked at issue time) → deaths → cooldown decrement. Ties broken by
// unit index throughout.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "marl/common/rng.hpp"

namespace marl::env {

inline constexpr int kObsDim = 96;
inline constexpr int kObsVersion = 1;
inline constexpr int kBlockWidth = 8;
inline constexpr int kMaxEnemies = 5;
inline constexpr int kMaxAllies = 5;
inline constexpr int kEnemyBlocksAt = 4;
inline constexpr int kAllyBlocksAt = 44;
inline constexpr int kOwnAt = 76;
inline constexpr int kAgentIdAt = 81;

inline constexpr int kActionNoop = 0;
inline constexpr int kActionStop = 1;
inline constexpr int kActionMoveNorth = 2;
inline constexpr int kActionMoveSouth = 3;
inline constexpr int kActionMoveEast = 4;
inline constexpr int kActionMoveWest = 5;
inline constexpr int kActionAttackBase = 6;

enum class UnitClass { kRanged, kMelee };
enum class Team { kAlly, kEnemy };

struct UnitStats {
  int max_health = 0;
  int damage = 0;
  int attack_range = 0;
  int cooldown = 1;  // steps between attacks
};

struct EnvConfig {
  int width = 14;
  int height = 10;
  int n_ally_ranged = 2;
  int n_ally_melee = 3;
  int n_enemy_ranged = 2;
  int n_enemy_melee = 3;
  int sight_range = 6;
  int episode_limit = 60;
  UnitStats ally_ranged{60, 10, 3, 2};
  UnitStats ally_melee{100, 8, 1, 1};
  UnitStats enemy_ranged{60, 10, 3, 2};
  UnitStats enemy_melee{100, 8, 1, 1};
  // Raw reward units; damage counts one unit per health point removed.
  int kill_bonus = 10;
  int win_bonus = 200;
  double reward_cap = 20.0;
  // Spawn: allies in columns [1, 1 + spawn_depth), enemies mirrored on the
  // right edge; rows drawn around the map center.
  int spawn_depth = 2;
  int spawn_rows = 6;
  int spawn_gap = 0;  // extra empty columns between the two spawn zones

  int n_allies() const { return n_ally_ranged + n_ally_melee; }
  int n_enemies() const { return n_enemy_ranged + n_enemy_melee; }
  int n_units() const { return n_allies() + n_enemies(); }
  int n_actions() const { return kActionAttackBase + n_enemies(); }
  int state_dim() const { return 5 * n_units() + 1; }
  // Sum of raw reward units available in one episode.
  std::int64_t max_raw_reward() const;
  void validate() const;
};

struct UnitState {
  int x = 0;
  int y = 0;
  int health = 0;
  int max_health = 0;
  int cooldown = 0;
  UnitClass unit_class = UnitClass::kRanged;
  Team team = Team::kAlly;
  bool alive = false;
};

struct WorldState {
  std::vector<UnitState> units;  // allies first, then enemies
  int step_count = 0;
  Rng rng;
  std::int64_t raw_reward = 0;  // accumulated raw units
  double cumulative_reward = 0.0;
  bool terminated = false;
  bool team_won = false;
};

struct AgentObservation {
  std::vector<double> features;  // kObsDim entries
  std::vector<bool> available;   // n_actions entries
};

struct StepOutcome {
  double reward = 0.0;
  bool terminated = false;
  bool team_won = false;
  bool timed_out = false;  // terminated by the episode limit
};

struct Snapshot {
  WorldState state;
  std::vector<AgentObservation> observations;
  std::vector<double> global_state;
};

struct StepResult {
  WorldState state;
  std::vector<AgentObservation> observations;
  std::vector<double> global_state;
  StepOutcome outcome;
};

class InvalidActionError : public std::invalid_argument {
 public:
  InvalidActionError(int agent, int action, const std::string& why);
  int agent() const { return agent_; }
  int action() const { return action_; }

 private:
  int agent_;
  int action_;
};

class MicroBattle {
 public:
  explicit MicroBattle(EnvConfig config = {});

  const EnvConfig& config() const { return config_; }
  int n_agents() const { return config_.n_allies(); }
  int n_actions() const { return config_.n_actions(); }
  int state_dim() const { return config_.state_dim(); }

  Snapshot reset(std::uint64_t seed) const;
  // Throws InvalidActionError if an ally action is unavailable.
  StepResult step(const WorldState& state,
                  const std::vector<int>& joint_action) const;

  AgentObservation observe(const WorldState& state, int agent) const;
  std::vector<AgentObservation> observe_all(const WorldState& state) const;
  std::vector<bool> available_actions(const WorldState& state, int agent) const;
  std::vector<double> global_state(const WorldState& state) const;

  // One action per enemy, enemy order; see scripted_action().
  std::vector<int> scripted_enemy_policy(const WorldState& state) const;

  // Builds a world from explicit units (used by tests and replay tooling).
  WorldState make_state(std::vector<UnitState> units,
                        std::uint64_t seed = 0) const;

  UnitState make_unit(Team team, UnitClass cls, int x, int y) const;

 private:
  const UnitStats& stats(const UnitState& u) const;
  int unit_index_of_enemy(int k) const { return config_.n_allies() + k; }
  bool can_move(const UnitState& u, int action) const;
  int scripted_action(const WorldState& state, int enemy) const;

  EnvConfig config_;
};

int chebyshev(const UnitState& a, const UnitState& b);

}  // namespace marl::env
