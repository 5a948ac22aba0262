#include "marl/qmix/rollout.hpp"

#include <algorithm>
#include <cmath>

namespace marl::qmix {

namespace {

nlohmann::json mask_to_json(const std::vector<bool>& m) {
  nlohmann::json j = nlohmann::json::array();
  for (bool b : m) j.push_back(b ? 1 : 0);
  return j;
}

}  // namespace

std::uint64_t episode_env_seed(std::uint64_t seed, int episode) {
  return derive_seed(seed, static_cast<std::uint64_t>(episode));
}

std::uint64_t episode_hook_seed(std::uint64_t seed, int episode) {
  return derive_seed(seed ^ 0x5bd1e9955bd1e995ULL,
                     static_cast<std::uint64_t>(episode));
}

nlohmann::json units_to_json(const env::WorldState& world) {
  nlohmann::json units = nlohmann::json::array();
  for (const auto& u : world.units) {
    units.push_back({{"team", u.team == env::Team::kAlly ? "ally" : "enemy"},
                     {"class", u.unit_class == env::UnitClass::kRanged ? "ranged"
                                                                       : "melee"},
                     {"x", u.x},
                     {"y", u.y},
                     {"health", u.health},
                     {"cooldown", u.cooldown},
                     {"alive", u.alive}});
  }
  return units;
}

EpisodeSummary run_episode(const env::MicroBattle& env, const TeamModel& team,
                           int episode, std::uint64_t env_seed,
                           std::uint64_t hook_seed, VictimHook* hook,
                           TraceSink* trace) {
  env::Snapshot snap = env.reset(env_seed);
  std::vector<Vector> hiddens = initial_hiddens(team);
  const int victim = hook ? hook->victim() : -1;
  if (hook) {
    if (victim < 0 || victim >= team.n_agents())
      throw std::invalid_argument("run_episode: victim index out of range");
    hook->begin_episode(episode, hook_seed, snap);
  }

  env::WorldState world = std::move(snap.state);
  std::vector<env::AgentObservation> obs = std::move(snap.observations);
  std::vector<double> gstate = std::move(snap.global_state);
  EpisodeSummary summary;
  while (!world.terminated) {
    const std::vector<Vector> hidden_before = hiddens;
    TeamStepQ tq = team_q_values(team, obs, hiddens);
    std::vector<int> actions(team.n_agents());
    std::vector<double> chosen(team.n_agents());
    for (int i = 0; i < team.n_agents(); ++i) {
      actions[i] = masked_argmax(tq.q[i], obs[i].available);
      chosen[i] = tq.q[i](actions[i]);
    }

    std::optional<AttackRecord> record;
    if (hook) {
      const env::AgentObservation& vobs = obs[victim];
      VictimView view;
      view.episode = episode;
      view.step = world.step_count;
      view.victim = victim;
      view.victim_alive = world.units[victim].alive;
      view.env = &env;
      view.world = &world;
      view.team = &team;
      view.clean_obs = &vobs;
      view.hidden_before = &hidden_before[victim];
      view.victim_q = &tq.q[victim];
      view.clean_action = actions[victim];
      view.chosen_qs = chosen;
      view.global_state = &gstate;
      HookDecision dec = hook->decide(view);
      if (view.victim_alive && dec.kind != HookDecision::Kind::kNone) {
        AttackRecord rec;
        rec.step = world.step_count;
        rec.target = dec.target;
        rec.clean_action = actions[victim];
        const int actions_clean = actions[victim];
        const bool untargeted =
            dec.untargeted && dec.kind == HookDecision::Kind::kPerturb;
        const bool target_ok = untargeted ||
                               (dec.target >= 0 &&
                               dec.target < env.n_actions() &&
                               vobs.available[dec.target]);
        if (!target_ok) ++summary.safety.unavailable_selections;
        if (dec.kind == HookDecision::Kind::kOverride) {
          if (target_ok) actions[victim] = dec.target;
          rec.iterations = 0;
        } else {
          if (dec.perturbed.size() != vobs.features.size())
            throw std::invalid_argument("hook returned a malformed observation");
          for (std::size_t f = 0; f < dec.perturbed.size(); ++f) {
            const double v = dec.perturbed[f];
            if (!(v >= -1.0 && v <= 1.0)) ++summary.safety.box_violations;
            const double d = std::abs(v - vobs.features[f]);
            rec.l1 += d;
            rec.linf = std::max(rec.linf, d);
          }
          // The victim only ever sees the perturbed observation.
          const AgentNet& net = team.net_for(victim);
          Vector h_new;
          const Vector q = diffnet::q_values(
              net, dec.perturbed,
              std::span<const double>(hidden_before[victim].data(),
                                      hidden_before[victim].size()),
              &h_new);
          actions[victim] = masked_argmax(q, vobs.available);
          if (net.config.recurrent()) hiddens[victim] = h_new;
          const bool success = untargeted ? actions[victim] != actions_clean
                                          : actions[victim] == dec.target;
          if (success != dec.reported_success) ++summary.safety.success_mismatches;
          rec.iterations = dec.iterations;
          rec.theta_used = dec.theta_used;
        }
        rec.taken_action = actions[victim];
        rec.success = untargeted ? rec.taken_action != rec.clean_action
                                 : rec.taken_action == dec.target;
        rec.changed = rec.taken_action != rec.clean_action;
        record = rec;
      }
    }

    env::StepResult res = env.step(world, actions);
    if (trace) {
      nlohmann::json j = {{"episode", episode},
                          {"step", world.step_count},
                          {"units", units_to_json(world)},
                          {"joint_action", actions},
                          {"reward", res.outcome.reward}};
      nlohmann::json masks = nlohmann::json::array();
      for (const auto& o : obs) masks.push_back(mask_to_json(o.available));
      j["masks"] = masks;
      if (record) {
        j["attack"] = {{"victim", victim},
                       {"target", record->target},
                       {"clean_action", record->clean_action},
                       {"taken_action", record->taken_action},
                       {"success", record->success},
                       {"l1", record->l1},
                       {"linf", record->linf},
                       {"iterations", record->iterations},
                       {"theta", record->theta_used}};
      }
      if (res.outcome.terminated) j["team_won"] = res.outcome.team_won;
      trace->record(j);
    }
    if (record) summary.attacks.push_back(*record);
    if (hook) hook->after_step({actions[victim], &res});
    world = std::move(res.state);
    obs = std::move(res.observations);
    gstate = std::move(res.global_state);
  }
  summary.reward = world.cumulative_reward;
  summary.won = world.team_won;
  summary.steps = world.step_count;
  return summary;
}

double EvalStats::misclassification_rate() const {
  return attacked_steps ? static_cast<double>(changed) / attacked_steps : 0.0;
}

double EvalStats::target_success_rate() const {
  return attacked_steps ? static_cast<double>(successes) / attacked_steps : 0.0;
}

double EvalStats::avg_l1() const {
  if (l1.empty()) return 0.0;
  double s = 0.0;
  for (double v : l1) s += v;
  return s / static_cast<double>(l1.size());
}

EvalStats evaluate(const env::MicroBattle& env, const TeamModel& team,
                   int n_episodes, std::uint64_t seed, VictimHook* hook,
                   TraceSink* trace) {
  if (n_episodes < 1) throw std::invalid_argument("evaluate: n_episodes < 1");
  EvalStats stats;
  stats.n_episodes = n_episodes;
  for (int e = 0; e < n_episodes; ++e) {
    EpisodeSummary s = run_episode(env, team, e, episode_env_seed(seed, e),
                                   episode_hook_seed(seed, e), hook, trace);
    stats.total_reward += s.reward;
    stats.episode_rewards.push_back(s.reward);
    stats.wins += s.won ? 1 : 0;
    for (const AttackRecord& a : s.attacks) {
      ++stats.attacked_steps;
      stats.successes += a.success ? 1 : 0;
      stats.changed += a.changed ? 1 : 0;
      stats.l1.push_back(a.l1);
      stats.max_linf = std::max(stats.max_linf, a.linf);
    }
    stats.safety.box_violations += s.safety.box_violations;
    stats.safety.success_mismatches += s.safety.success_mismatches;
    stats.safety.unavailable_selections += s.safety.unavailable_selections;
  }
  return stats;
}

}  // namespace marl::qmix
