#include "marl/env/micro_battle.hpp"

#include <algorithm>
#include <cstdlib>
#include <limits>

namespace marl::env {

namespace {

constexpr int kDx[4] = {0, 0, 1, -1};  // N, S, E, W
constexpr int kDy[4] = {-1, 1, 0, 0};

double signed_ratio(int num, int den) {
  return static_cast<double>(num) / static_cast<double>(den);
}

double coord_norm(int v, int extent) {
  if (extent <= 1) return 0.0;
  return 2.0 * static_cast<double>(v) / static_cast<double>(extent - 1) - 1.0;
}

}  // namespace

int chebyshev(const UnitState& a, const UnitState& b) {
  return std::max(std::abs(a.x - b.x), std::abs(a.y - b.y));
}

std::int64_t EnvConfig::max_raw_reward() const {
  std::int64_t total = static_cast<std::int64_t>(n_enemy_ranged) *
                           enemy_ranged.max_health +
                       static_cast<std::int64_t>(n_enemy_melee) *
                           enemy_melee.max_health;
  total += static_cast<std::int64_t>(kill_bonus) * n_enemies();
  total += win_bonus;
  return total;
}

void EnvConfig::validate() const {
  auto fail = [](const char* msg) { throw std::invalid_argument(msg); };
  if (width < 4 || height < 4) fail("EnvConfig: grid too small");
  if (n_allies() < 1 || n_enemies() < 1) fail("EnvConfig: empty team");
  if (sight_range < 1) fail("EnvConfig: sight_range must be >= 1");
  if (episode_limit < 1) fail("EnvConfig: episode_limit must be >= 1");
  if (kill_bonus < 0 || win_bonus < 0) fail("EnvConfig: negative bonus");
  if (reward_cap <= 0.0) fail("EnvConfig: reward_cap must be positive");
  if (spawn_depth < 1 || 2 * spawn_depth + 2 + spawn_gap > width)
    fail("EnvConfig: spawn zones do not fit");
  if (spawn_rows < 1 || spawn_rows > height)
    fail("EnvConfig: spawn_rows out of range");
  for (const UnitStats* s :
       {&ally_ranged, &ally_melee, &enemy_ranged, &enemy_melee}) {
    if (s->max_health <= 0 || s->damage < 0 || s->attack_range < 1 ||
        s->cooldown < 1)
      fail("EnvConfig: invalid unit stats");
    if (s->attack_range > sight_range)
      fail("EnvConfig: attack range exceeds sight range");
  }
  if (n_enemies() > kMaxEnemies || n_allies() > kMaxAllies)
    fail("EnvConfig: more units than the observation layout has slots for");
}

InvalidActionError::InvalidActionError(int agent, int action,
                                       const std::string& why)
    : std::invalid_argument("agent " + std::to_string(agent) + " action " +
                            std::to_string(action) + ": " + why),
      agent_(agent),
      action_(action) {}

MicroBattle::MicroBattle(EnvConfig config) : config_(std::move(config)) {
  config_.validate();
}

const UnitStats& MicroBattle::stats(const UnitState& u) const {
  if (u.team == Team::kAlly)
    return u.unit_class == UnitClass::kRanged ? config_.ally_ranged
                                              : config_.ally_melee;
  return u.unit_class == UnitClass::kRanged ? config_.enemy_ranged
                                            : config_.enemy_melee;
}

UnitState MicroBattle::make_unit(Team team, UnitClass cls, int x, int y) const {
  UnitState u;
  u.team = team;
  u.unit_class = cls;
  u.x = x;
  u.y = y;
  u.max_health = stats(u).max_health;
  u.health = u.max_health;
  u.alive = true;
  return u;
}

WorldState MicroBattle::make_state(std::vector<UnitState> units,
                                   std::uint64_t seed) const {
  if (static_cast<int>(units.size()) != config_.n_units())
    throw std::invalid_argument("make_state: wrong number of units");
  WorldState s;
  s.units = std::move(units);
  s.rng = Rng(seed);
  for (auto& u : s.units) u.alive = u.health > 0;
  return s;
}

Snapshot MicroBattle::reset(std::uint64_t seed) const {
  WorldState s;
  s.rng = Rng(seed);
  const int row_lo = (config_.height - config_.spawn_rows) / 2;
  auto place = [&](Team team, UnitClass cls) {
    const int depth = static_cast<int>(s.rng.below(config_.spawn_depth));
    const int row = row_lo + static_cast<int>(s.rng.below(config_.spawn_rows));
    const int x = team == Team::kAlly ? 1 + depth : config_.width - 2 - depth;
    s.units.push_back(make_unit(team, cls, x, row));
  };
  for (int i = 0; i < config_.n_ally_ranged; ++i)
    place(Team::kAlly, UnitClass::kRanged);
  for (int i = 0; i < config_.n_ally_melee; ++i)
    place(Team::kAlly, UnitClass::kMelee);
  for (int i = 0; i < config_.n_enemy_ranged; ++i)
    place(Team::kEnemy, UnitClass::kRanged);
  for (int i = 0; i < config_.n_enemy_melee; ++i)
    place(Team::kEnemy, UnitClass::kMelee);
  Snapshot snap;
  snap.observations = observe_all(s);
  snap.global_state = global_state(s);
  snap.state = std::move(s);
  return snap;
}

bool MicroBattle::can_move(const UnitState& u, int action) const {
  const int d = action - kActionMoveNorth;
  const int nx = u.x + kDx[d];
  const int ny = u.y + kDy[d];
  return nx >= 0 && nx < config_.width && ny >= 0 && ny < config_.height;
}

std::vector<bool> MicroBattle::available_actions(const WorldState& state,
                                                 int agent) const {
  std::vector<bool> mask(config_.n_actions(), false);
  const UnitState& self = state.units.at(agent);
  if (!self.alive || state.terminated) {
    mask[kActionNoop] = true;
    return mask;
  }
  mask[kActionStop] = true;
  for (int a = kActionMoveNorth; a <= kActionMoveWest; ++a)
    mask[a] = can_move(self, a);
  if (self.cooldown == 0) {
    const int range = stats(self).attack_range;
    for (int k = 0; k < config_.n_enemies(); ++k) {
      const UnitState& e = state.units[unit_index_of_enemy(k)];
      mask[kActionAttackBase + k] = e.alive && chebyshev(self, e) <= range;
    }
  }
  return mask;
}

AgentObservation MicroBattle::observe(const WorldState& state,
                                      int agent) const {
  AgentObservation obs;
  obs.features.assign(kObsDim, 0.0);
  obs.available = available_actions(state, agent);
  const UnitState& self = state.units.at(agent);
  if (!self.alive) return obs;

  auto& f = obs.features;
  const int sight = config_.sight_range;
  const int own_range = stats(self).attack_range;
  for (int a = kActionMoveNorth; a <= kActionMoveWest; ++a)
    f[a - kActionMoveNorth] = can_move(self, a) ? 1.0 : 0.0;

  auto encode = [&](int offset, const UnitState& u) {
    if (!u.alive) return;
    const int dist = chebyshev(self, u);
    if (dist > sight) return;
    f[offset + 0] = 1.0;
    f[offset + 1] = signed_ratio(u.x - self.x, sight);
    f[offset + 2] = signed_ratio(u.y - self.y, sight);
    f[offset + 3] = signed_ratio(dist, sight);
    f[offset + 4] = signed_ratio(u.health, u.max_health);
    f[offset + 5] = u.unit_class == UnitClass::kRanged ? 1.0 : 0.0;
    f[offset + 6] = u.cooldown > 0 ? 1.0 : 0.0;
    f[offset + 7] = dist <= own_range ? 1.0 : 0.0;
  };

  for (int k = 0; k < config_.n_enemies(); ++k)
    encode(kEnemyBlocksAt + kBlockWidth * k, state.units[unit_index_of_enemy(k)]);
  int slot = 0;
  for (int j = 0; j < config_.n_allies(); ++j) {
    if (j == agent) continue;
    encode(kAllyBlocksAt + kBlockWidth * slot++, state.units[j]);
  }
  f[kOwnAt + 0] = signed_ratio(self.health, self.max_health);
  f[kOwnAt + 1] = self.cooldown > 0 ? 1.0 : 0.0;
  f[kOwnAt + 2] = coord_norm(self.x, config_.width);
  f[kOwnAt + 3] = coord_norm(self.y, config_.height);
  f[kOwnAt + 4] = self.unit_class == UnitClass::kRanged ? 1.0 : 0.0;
  f[kAgentIdAt + agent] = 1.0;
  return obs;
}

std::vector<AgentObservation> MicroBattle::observe_all(
    const WorldState& state) const {
  std::vector<AgentObservation> out;
  out.reserve(config_.n_allies());
  for (int i = 0; i < config_.n_allies(); ++i) out.push_back(observe(state, i));
  return out;
}

std::vector<double> MicroBattle::global_state(const WorldState& state) const {
  std::vector<double> g;
  g.reserve(state_dim());
  for (const auto& u : state.units) {
    const UnitStats& st = stats(u);
    g.push_back(u.alive ? 1.0 : 0.0);
    g.push_back(signed_ratio(u.health, u.max_health));
    g.push_back(u.alive ? coord_norm(u.x, config_.width) : 0.0);
    g.push_back(u.alive ? coord_norm(u.y, config_.height) : 0.0);
    g.push_back(signed_ratio(u.cooldown, st.cooldown));
  }
  g.push_back(signed_ratio(state.step_count, config_.episode_limit));
  return g;
}

int MicroBattle::scripted_action(const WorldState& state, int enemy) const {
  const UnitState& self = state.units[unit_index_of_enemy(enemy)];
  if (!self.alive) return kActionNoop;
  const int range = stats(self).attack_range;
  int nearest = -1;
  int nearest_dist = std::numeric_limits<int>::max();
  for (int j = 0; j < config_.n_allies(); ++j) {
    const UnitState& a = state.units[j];
    if (!a.alive) continue;
    const int d = chebyshev(self, a);
    if (d < nearest_dist) {
      nearest = j;
      nearest_dist = d;
    }
  }
  if (nearest < 0) return kActionNoop;
  if (nearest_dist <= range)
    return self.cooldown == 0 ? kActionAttackBase + nearest : kActionStop;
  const UnitState& target = state.units[nearest];
  const int dx = target.x - self.x;
  const int dy = target.y - self.y;
  if (std::abs(dx) >= std::abs(dy))
    return dx > 0 ? kActionMoveEast : kActionMoveWest;
  return dy > 0 ? kActionMoveSouth : kActionMoveNorth;
}

std::vector<int> MicroBattle::scripted_enemy_policy(
    const WorldState& state) const {
  std::vector<int> actions(config_.n_enemies());
  for (int k = 0; k < config_.n_enemies(); ++k)
    actions[k] = scripted_action(state, k);
  return actions;
}

StepResult MicroBattle::step(const WorldState& state,
                             const std::vector<int>& joint_action) const {
  if (state.terminated)
    throw std::logic_error("MicroBattle::step on a terminated episode");
  const int n_allies = config_.n_allies();
  if (static_cast<int>(joint_action.size()) != n_allies)
    throw std::invalid_argument("MicroBattle::step: joint action size");
  for (int i = 0; i < n_allies; ++i) {
    const int a = joint_action[i];
    if (a < 0 || a >= config_.n_actions())
      throw InvalidActionError(i, a, "out of range");
    if (!available_actions(state, i)[a])
      throw InvalidActionError(i, a, "not available");
  }
  const std::vector<int> enemy_actions = scripted_enemy_policy(state);

  StepResult res;
  res.state = state;
  WorldState& s = res.state;
  const int n_units = config_.n_units();
  std::vector<int> actions(n_units);
  for (int i = 0; i < n_allies; ++i) actions[i] = joint_action[i];
  for (int k = 0; k < config_.n_enemies(); ++k)
    actions[n_allies + k] = enemy_actions[k];

  // Targets are resolved against pre-movement positions.
  std::vector<int> target(n_units, -1);
  for (int u = 0; u < n_units; ++u) {
    const int a = actions[u];
    if (a < kActionAttackBase) continue;
    const int k = a - kActionAttackBase;
    target[u] = s.units[u].team == Team::kAlly ? unit_index_of_enemy(k) : k;
  }

  for (int u = 0; u < n_units; ++u) {
    const int a = actions[u];
    if (a < kActionMoveNorth || a > kActionMoveWest) continue;
    UnitState& unit = s.units[u];
    if (!can_move(unit, a)) continue;
    unit.x += kDx[a - kActionMoveNorth];
    unit.y += kDy[a - kActionMoveNorth];
  }

  std::vector<int> damage(n_units, 0);
  for (int u = 0; u < n_units; ++u) {
    if (target[u] < 0) continue;
    damage[target[u]] += stats(s.units[u]).damage;
    s.units[u].cooldown = stats(s.units[u]).cooldown;
  }

  std::int64_t raw = 0;
  for (int u = 0; u < n_units; ++u) {
    UnitState& unit = s.units[u];
    if (damage[u] == 0 || !unit.alive) continue;
    const int dealt = std::min(damage[u], unit.health);
    unit.health -= dealt;
    if (unit.team == Team::kEnemy) raw += dealt;
  }
  bool any_ally = false;
  bool any_enemy = false;
  for (auto& unit : s.units) {
    if (unit.alive && unit.health == 0) {
      unit.alive = false;
      unit.cooldown = 0;
      if (unit.team == Team::kEnemy) raw += config_.kill_bonus;
    }
    if (unit.alive) (unit.team == Team::kAlly ? any_ally : any_enemy) = true;
  }
  for (auto& unit : s.units)
    if (unit.cooldown > 0) --unit.cooldown;

  s.step_count += 1;
  StepOutcome& out = res.outcome;
  if (!any_enemy) {
    raw += config_.win_bonus;
    out.terminated = true;
    out.team_won = true;
  } else if (!any_ally) {
    out.terminated = true;
  } else if (s.step_count >= config_.episode_limit) {
    out.terminated = true;
    out.timed_out = true;
  }

  // Cumulative reward is derived from the integer tally so that a fully won
  // episode lands exactly on the cap.
  const double before = s.cumulative_reward;
  s.raw_reward += raw;
  s.cumulative_reward = config_.reward_cap *
                        static_cast<double>(s.raw_reward) /
                        static_cast<double>(config_.max_raw_reward());
  out.reward = s.cumulative_reward - before;
  s.terminated = out.terminated;
  s.team_won = out.team_won;

  res.observations = observe_all(s);
  res.global_state = global_state(s);
  return res;
}

}  // namespace marl::env
