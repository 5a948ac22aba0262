#include "marl/harness/scenario.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "marl/env/config_json.hpp"
#include "marl/harness/experiment.hpp"

namespace marl::harness {

Scenario default_scenario() {
  Scenario s;
  // slightly weaker enemies: a coordinated team wins reliably, four agents
  // usually do not
  s.env.enemy_ranged.max_health = 55;
  s.env.enemy_melee.max_health = 90;

  s.team.optimizer.kind = diffnet::OptimizerKind::kAdam;
  s.team.optimizer.lr = 5e-4;
  s.team.optimizer.clip_norm = 10.0;
  s.team.n_episodes = 6000;
  s.team.epsilon_anneal_fraction = 0.25;
  s.team.hidden_dim = 64;
  s.team.embed_dim = 32;
  s.team.batch_size = 32;
  s.team.target_sync_period = 200;
  s.team.eval_every = 600;
  s.team.eval_episodes = 50;
  s.team.log_every = 100;

  qmix::TrainConfig& a = s.adversary.train;
  a = s.team;
  a.optimizer.lr = 1e-3;
  a.n_episodes = 12000;
  a.epsilon_anneal_fraction = 0.3;
  // frequent, fairly large evaluations: keep_best picks among these
  a.eval_every = 200;
  a.eval_episodes = 300;
  a.log_every = 200;
  // victim Q gaps are mostly below 0.25, so the squared gap needs a large
  // weight to matter next to per-step team reward
  s.adversary.lambda = 1.0;
  s.adversary.keep_best = true;
  return s;
}

void to_json(nlohmann::json& j, const Scenario& s) {
  j = {{"schema_version", kSchemaVersion},
       {"env", s.env},
       {"team", s.team},
       {"adversary", s.adversary},
       {"victim", s.victim},
       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, Scenario& s) {
  static const std::set<std::string> known = {"schema_version", "env",    "team",
                                              "adversary",      "victim", "seed"};
  for (const auto& [k, _] : j.items())
    if (!known.contains(k)) throw std::invalid_argument("unknown scenario key: " + k);
  if (!j.contains("schema_version") || j.at("schema_version") != kSchemaVersion)
    throw std::invalid_argument("scenario: missing or unsupported schema_version");
  if (j.contains("env")) env::from_json(j.at("env"), s.env);
  if (j.contains("team")) qmix::from_json(j.at("team"), s.team);
  if (j.contains("adversary")) advpolicy::from_json(j.at("adversary"), s.adversary);
  if (j.contains("victim")) s.victim = j.at("victim").get<int>();
  if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
  s.env.validate();
  s.team.validate();
  s.adversary.validate();
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario " + path.string());
  Scenario s = default_scenario();
  from_json(nlohmann::json::parse(in), s);
  return s;
}

}  // namespace marl::harness
