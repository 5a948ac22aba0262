#include "doctest.h"

#include "marl/env/config_json.hpp"
#include "marl/env/micro_battle.hpp"

using namespace marl;
using namespace marl::env;

namespace {

std::vector<int> random_joint(const MicroBattle& env, const WorldState& s, Rng& rng) {
  std::vector<int> a(env.n_agents());
  for (int i = 0; i < env.n_agents(); ++i)
    a[i] = rng.pick_available(env.available_actions(s, i));
  return a;
}

bool all_in_box(const std::vector<AgentObservation>& obs) {
  for (const auto& o : obs)
    for (double f : o.features)
      if (!(f >= -1.0 && f <= 1.0)) return false;
  return true;
}

// Allies chase and hit the lowest-index living enemy they can reach.
std::vector<int> focus_fire(const MicroBattle& env, const WorldState& s) {
  std::vector<int> a(env.n_agents(), kActionNoop);
  const int n_allies = env.config().n_allies();
  int target = -1;
  for (int k = 0; k < env.config().n_enemies(); ++k)
    if (s.units[n_allies + k].alive) {
      target = k;
      break;
    }
  for (int i = 0; i < n_allies; ++i) {
    const auto mask = env.available_actions(s, i);
    if (!s.units[i].alive) continue;
    int pick = kActionStop;
    for (int k = 0; k < env.config().n_enemies() && pick == kActionStop; ++k)
      if (mask[kActionAttackBase + k]) pick = kActionAttackBase + k;
    if (pick == kActionStop && target >= 0) {
      const auto& t = s.units[n_allies + target];
      const int dx = t.x - s.units[i].x, dy = t.y - s.units[i].y;
      if (std::abs(dx) >= std::abs(dy) && dx != 0)
        pick = dx > 0 ? kActionMoveEast : kActionMoveWest;
      else if (dy != 0)
        pick = dy > 0 ? kActionMoveSouth : kActionMoveNorth;
    }
    a[i] = mask[pick] ? pick : kActionStop;
  }
  return a;
}

}  // namespace

TEST_CASE("reset is deterministic and clean") {
  MicroBattle env;
  Snapshot a = env.reset(5), b = env.reset(5);
  REQUIRE(a.state.units.size() == 10);
  for (std::size_t u = 0; u < a.state.units.size(); ++u) {
    CHECK(a.state.units[u].x == b.state.units[u].x);
    CHECK(a.state.units[u].y == b.state.units[u].y);
    CHECK(a.state.units[u].alive);
  }
  CHECK(a.state.cumulative_reward == 0.0);
  CHECK(static_cast<int>(a.observations.size()) == 5);
  CHECK(all_in_box(a.observations));
  for (const auto& o : a.observations) CHECK(o.features.size() == kObsDim);
  CHECK(a.global_state.size() == static_cast<std::size_t>(env.state_dim()));
}

TEST_CASE("random play stays bounded over 10000 steps") {
  MicroBattle env;
  Rng rng(1);
  int steps = 0;
  int episode = 0;
  while (steps < 10000) {
    Snapshot snap = env.reset(1000 + episode++);
    WorldState s = snap.state;
    std::vector<int> prev_health;
    for (const auto& u : s.units) prev_health.push_back(u.health);
    while (!s.terminated) {
      StepResult r = env.step(s, random_joint(env, s, rng));
      ++steps;
      REQUIRE(all_in_box(r.observations));
      REQUIRE(r.state.cumulative_reward <= 20.0 + 1e-12);
      REQUIRE(std::isfinite(r.outcome.reward));
      REQUIRE(r.state.step_count <= env.config().episode_limit);
      for (std::size_t u = 0; u < r.state.units.size(); ++u) {
        const auto& unit = r.state.units[u];
        REQUIRE(unit.health <= prev_health[u]);
        REQUIRE(unit.alive == (unit.health > 0));
        prev_health[u] = unit.health;
      }
      if (r.outcome.team_won) REQUIRE(r.outcome.terminated);
      for (int i = 0; i < env.n_agents(); ++i) {
        const auto& o = r.observations[i];
        bool any = false;
        for (bool m : o.available) any = any || m;
        REQUIRE(any);
        // an available attack always names a living enemy in range
        for (int k = 0; k < env.config().n_enemies(); ++k)
          if (o.available[kActionAttackBase + k]) {
            const auto& e = r.state.units[env.config().n_allies() + k];
            const auto& me = r.state.units[i];
            REQUIRE(e.alive);
            REQUIRE(std::max(std::abs(e.x - me.x), std::abs(e.y - me.y)) <=
                    (me.unit_class == UnitClass::kRanged
                         ? env.config().ally_ranged.attack_range
                         : env.config().ally_melee.attack_range));
          }
      }
      s = r.state;
    }
  }
}

TEST_CASE("same seed and actions replay the same trajectory") {
  MicroBattle env;
  auto run = [&] {
    Rng rng(3);
    WorldState s = env.reset(42).state;
    std::vector<double> rewards;
    while (!s.terminated) {
      StepResult r = env.step(s, random_joint(env, s, rng));
      rewards.push_back(r.outcome.reward);
      s = r.state;
    }
    return rewards;
  };
  CHECK(run() == run());
}

TEST_CASE("a full win pays exactly the cap") {
  // Harmless enemies: focus fire must clear them, dealing all their health.
  EnvConfig c;
  c.enemy_ranged.damage = 0;
  c.enemy_melee.damage = 0;
  MicroBattle env(c);
  WorldState s = env.reset(4).state;
  while (!s.terminated) s = env.step(s, focus_fire(env, s)).state;
  REQUIRE(s.team_won);
  CHECK(s.cumulative_reward == 20.0);
}

TEST_CASE("idle allies far from enemies earn nothing") {
  MicroBattle env;
  std::vector<UnitState> units;
  for (int i = 0; i < 5; ++i)
    units.push_back(env.make_unit(Team::kAlly, i < 2 ? UnitClass::kRanged
                                                     : UnitClass::kMelee, 0, i));
  for (int k = 0; k < 5; ++k)
    units.push_back(env.make_unit(Team::kEnemy, k < 2 ? UnitClass::kRanged
                                                      : UnitClass::kMelee, 13, k));
  WorldState s = env.make_state(units);
  StepResult r = env.step(s, std::vector<int>(5, kActionStop));
  CHECK(r.outcome.reward == 0.0);
  CHECK(!r.outcome.terminated);
}

TEST_CASE("observation encoding of a hand-built state") {
  EnvConfig c;
  c.n_ally_ranged = 1;
  c.n_ally_melee = 0;
  c.n_enemy_ranged = 0;
  c.n_enemy_melee = 1;
  MicroBattle env(c);
  UnitState ally = env.make_unit(Team::kAlly, UnitClass::kRanged, 2, 3);
  UnitState enemy = env.make_unit(Team::kEnemy, UnitClass::kMelee, 5, 1);
  enemy.health = 50;
  WorldState s = env.make_state({ally, enemy});
  AgentObservation o = env.observe(s, 0);
  REQUIRE(o.features.size() == kObsDim);
  // movement: all four directions are inside the 14 x 10 grid
  for (int d = 0; d < 4; ++d) CHECK(o.features[d] == 1.0);
  // enemy block at [4, 12)
  CHECK(o.features[4] == 1.0);
  CHECK(o.features[5] == doctest::Approx(3.0 / 6.0));
  CHECK(o.features[6] == doctest::Approx(-2.0 / 6.0));
  CHECK(o.features[7] == doctest::Approx(3.0 / 6.0));
  CHECK(o.features[8] == doctest::Approx(0.5));
  CHECK(o.features[9] == 0.0);
  CHECK(o.features[10] == 0.0);
  CHECK(o.features[11] == 1.0);  // Chebyshev 3 <= ranged attack range 3
  // own block after 5 enemy + 4 ally blocks
  CHECK(o.features[76] == 1.0);
  CHECK(o.features[77] == 0.0);
  CHECK(o.features[78] == doctest::Approx(2.0 * 2 / 13.0 - 1.0));
  CHECK(o.features[79] == doctest::Approx(2.0 * 3 / 9.0 - 1.0));
  CHECK(o.features[80] == 1.0);
  CHECK(o.features[81] == 1.0);
  for (int f = 82; f < kObsDim; ++f) CHECK(o.features[f] == 0.0);
  CHECK(o.available[kActionAttackBase + 0]);
}

TEST_CASE("units outside sight leave a zero block; dead agents see nothing") {
  MicroBattle env;
  std::vector<UnitState> units;
  for (int i = 0; i < 5; ++i)
    units.push_back(env.make_unit(Team::kAlly, i < 2 ? UnitClass::kRanged
                                                     : UnitClass::kMelee, 0, i));
  for (int k = 0; k < 5; ++k)
    units.push_back(env.make_unit(Team::kEnemy, k < 2 ? UnitClass::kRanged
                                                      : UnitClass::kMelee, 13, k));
  units[1].health = 0;
  units[1].alive = false;
  WorldState s = env.make_state(units);
  AgentObservation o = env.observe(s, 0);
  for (int f = 4; f < 44; ++f) CHECK(o.features[f] == 0.0);
  // ally 1 (dead) is the first other-ally block
  for (int f = 44; f < 52; ++f) CHECK(o.features[f] == 0.0);
  CHECK(o.features[52] == 1.0);

  AgentObservation dead = env.observe(s, 1);
  for (double f : dead.features) CHECK(f == 0.0);
  for (int a = 0; a < env.n_actions(); ++a) CHECK(dead.available[a] == (a == kActionNoop));
}

TEST_CASE("unavailable actions are rejected with the agent index") {
  MicroBattle env;
  WorldState s = env.reset(0).state;
  std::vector<int> a(5, kActionStop);
  a[3] = kActionAttackBase;  // nobody is in range at spawn
  try {
    env.step(s, a);
    FAIL("expected InvalidActionError");
  } catch (const InvalidActionError& e) {
    CHECK(e.agent() == 3);
    CHECK(e.action() == kActionAttackBase);
  }
}

TEST_CASE("scripted enemies") {
  EnvConfig c;
  c.n_ally_ranged = 0;
  c.n_ally_melee = 2;
  c.n_enemy_ranged = 0;
  c.n_enemy_melee = 1;
  MicroBattle env(c);
  SUBCASE("adjacent ally is attacked") {
    WorldState s = env.make_state({env.make_unit(Team::kAlly, UnitClass::kMelee, 4, 4),
                                   env.make_unit(Team::kAlly, UnitClass::kMelee, 0, 0),
                                   env.make_unit(Team::kEnemy, UnitClass::kMelee, 5, 4)});
    CHECK(env.scripted_enemy_policy(s)[0] == kActionAttackBase + 0);
  }
  SUBCASE("equidistant allies: lower index wins") {
    WorldState s = env.make_state({env.make_unit(Team::kAlly, UnitClass::kMelee, 4, 3),
                                   env.make_unit(Team::kAlly, UnitClass::kMelee, 4, 5),
                                   env.make_unit(Team::kEnemy, UnitClass::kMelee, 5, 4)});
    CHECK(env.scripted_enemy_policy(s)[0] == kActionAttackBase + 0);
  }
  SUBCASE("far ally: move toward it") {
    WorldState s = env.make_state({env.make_unit(Team::kAlly, UnitClass::kMelee, 1, 4),
                                   env.make_unit(Team::kAlly, UnitClass::kMelee, 1, 5),
                                   env.make_unit(Team::kEnemy, UnitClass::kMelee, 8, 4)});
    CHECK(env.scripted_enemy_policy(s)[0] == kActionMoveWest);
  }
  SUBCASE("no allies alive: no-op") {
    auto a = env.make_unit(Team::kAlly, UnitClass::kMelee, 1, 4);
    auto b = env.make_unit(Team::kAlly, UnitClass::kMelee, 1, 5);
    a.health = b.health = 0;
    a.alive = b.alive = false;
    WorldState s = env.make_state({a, b, env.make_unit(Team::kEnemy, UnitClass::kMelee, 8, 4)});
    CHECK(env.scripted_enemy_policy(s)[0] == kActionNoop);
  }
}

TEST_CASE("attacks resolve simultaneously against locked targets") {
  EnvConfig c;
  c.n_ally_ranged = 0;
  c.n_ally_melee = 1;
  c.n_enemy_ranged = 0;
  c.n_enemy_melee = 1;
  MicroBattle env(c);
  auto ally = env.make_unit(Team::kAlly, UnitClass::kMelee, 4, 4);
  auto enemy = env.make_unit(Team::kEnemy, UnitClass::kMelee, 5, 4);
  ally.health = enemy.health = 8;  // one hit kills either
  WorldState s = env.make_state({ally, enemy});
  StepResult r = env.step(s, {kActionAttackBase});
  // both die in the same step: the enemy's blow lands too
  CHECK(!r.state.units[0].alive);
  CHECK(!r.state.units[1].alive);
  CHECK(r.outcome.team_won);
}

TEST_CASE("timeout ends the episode without a win") {
  EnvConfig c;
  c.episode_limit = 3;
  MicroBattle env(c);
  WorldState s = env.reset(9).state;
  StepResult r;
  for (int t = 0; t < 3; ++t) {
    r = env.step(s, std::vector<int>(5, kActionStop));
    s = r.state;
  }
  CHECK(r.outcome.terminated);
  CHECK(r.outcome.timed_out);
  CHECK(!r.outcome.team_won);
}

TEST_CASE("config json round trip and rejection") {
  EnvConfig c;
  c.width = 12;
  c.enemy_melee.max_health = 77;
  nlohmann::json j = c;
  EnvConfig back = j.get<EnvConfig>();
  CHECK(back.width == 12);
  CHECK(back.enemy_melee.max_health == 77);
  j["bogus"] = 1;
  CHECK_THROWS(j.get<EnvConfig>());
  nlohmann::json v = c;
  v["obs_version"] = 2;
  CHECK_THROWS(v.get<EnvConfig>());
  EnvConfig bad;
  bad.n_enemy_melee = 9;  // more enemies than the observation has blocks for
  CHECK_THROWS(bad.validate());
}
