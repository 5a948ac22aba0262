#include "marl/qmix/train.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <set>

#include "marl/env/config_json.hpp"
#include "marl/qmix/learner.hpp"
#include "marl/qmix/rollout.hpp"

namespace marl::qmix {

void TrainConfig::validate() const {
  auto fail = [](const char* m) { throw std::invalid_argument(m); };
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("TrainConfig: gamma must be in (0, 1]");
  if (optimizer.lr < 0.0) fail("TrainConfig: negative learning rate");
  for (double e : {epsilon_start, epsilon_end})
    if (e < 0.0 || e > 1.0) fail("TrainConfig: epsilon outside [0, 1]");
  if (epsilon_anneal_fraction <= 0.0) fail("TrainConfig: anneal fraction <= 0");
  if (buffer_capacity < 1 || batch_size < 1 || target_sync_period < 1)
    fail("TrainConfig: buffer, batch and sync period must be positive");
  if (batch_size > buffer_capacity) fail("TrainConfig: batch exceeds buffer");
  if (n_episodes < 0) fail("TrainConfig: negative episode count");
  if (hidden_dim < 1 || embed_dim < 1) fail("TrainConfig: network sizes");
  if (eval_every < 0 || eval_episodes < 1 || log_every < 1)
    fail("TrainConfig: logging / evaluation cadence");
}

double TrainConfig::epsilon_at(int episode) const {
  const double span = epsilon_anneal_fraction * n_episodes;
  const double frac = span > 0.0 ? std::min(1.0, episode / span) : 1.0;
  return epsilon_start + (epsilon_end - epsilon_start) * frac;
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"gamma", c.gamma},
       {"optimizer", diffnet::to_string(c.optimizer.kind)},
       {"lr", c.optimizer.lr},
       {"clip_norm", c.optimizer.clip_norm},
       {"epsilon_start", c.epsilon_start},
       {"epsilon_end", c.epsilon_end},
       {"epsilon_anneal_fraction", c.epsilon_anneal_fraction},
       {"buffer_capacity", c.buffer_capacity},
       {"batch_size", c.batch_size},
       {"target_sync_period", c.target_sync_period},
       {"n_episodes", c.n_episodes},
       {"hidden_dim", c.hidden_dim},
       {"embed_dim", c.embed_dim},
       {"eval_every", c.eval_every},
       {"eval_episodes", c.eval_episodes},
       {"log_every", c.log_every}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::set<std::string> known = {
      "gamma",        "optimizer",  "lr",          "clip_norm",
      "epsilon_start", "epsilon_end", "epsilon_anneal_fraction",
      "buffer_capacity", "batch_size", "target_sync_period", "n_episodes",
      "hidden_dim",   "embed_dim",  "eval_every",  "eval_episodes",
      "log_every"};
  for (const auto& [k, _] : j.items())
    if (!known.contains(k))
      throw std::invalid_argument("unknown train config key: " + k);
  auto read = [&](const char* key, auto& out) {
    if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
  };
  read("gamma", c.gamma);
  if (j.contains("optimizer"))
    c.optimizer.kind =
        diffnet::optimizer_kind_from_string(j.at("optimizer").get<std::string>());
  read("lr", c.optimizer.lr);
  read("clip_norm", c.optimizer.clip_norm);
  read("epsilon_start", c.epsilon_start);
  read("epsilon_end", c.epsilon_end);
  read("epsilon_anneal_fraction", c.epsilon_anneal_fraction);
  read("buffer_capacity", c.buffer_capacity);
  read("batch_size", c.batch_size);
  read("target_sync_period", c.target_sync_period);
  read("n_episodes", c.n_episodes);
  read("hidden_dim", c.hidden_dim);
  read("embed_dim", c.embed_dim);
  read("eval_every", c.eval_every);
  read("eval_episodes", c.eval_episodes);
  read("log_every", c.log_every);
}

void write_train_log_csv(const std::vector<TrainLogRow>& rows, std::ostream& out) {
  out << "episode,loss,epsilon,eval_win_rate,eval_reward\n";
  char buf[128];
  for (const auto& r : rows) {
    std::string loss = std::isfinite(r.loss) ? "" : "nan";
    if (loss.empty()) {
      std::snprintf(buf, sizeof(buf), "%.6f", r.loss);
      loss = buf;
    }
    std::string win, reward;
    if (r.eval_win_rate >= 0.0) {
      std::snprintf(buf, sizeof(buf), "%.4f", r.eval_win_rate);
      win = buf;
      std::snprintf(buf, sizeof(buf), "%.4f", r.eval_reward);
      reward = buf;
    }
    std::snprintf(buf, sizeof(buf), "%d,%s,%.4f,%s,%s\n", r.episode, loss.c_str(),
                  r.epsilon, win.c_str(), reward.c_str());
    out << buf;
  }
}

CollectedEpisode collect_episode(const env::MicroBattle& env,
                                 const TeamModel& team, std::uint64_t env_seed,
                                 double epsilon, Rng& rng) {
  env::Snapshot snap = env.reset(env_seed);
  const int n = team.n_agents();
  CollectedEpisode out;
  out.record = EpisodeRecord(n, env::kObsDim, env.state_dim(), env.n_actions());
  auto push_view = [&](const std::vector<env::AgentObservation>& obs,
                       const std::vector<double>& g) {
    std::vector<std::vector<double>> f(n);
    std::vector<std::vector<bool>> m(n);
    for (int i = 0; i < n; ++i) {
      f[i] = obs[i].features;
      m[i] = obs[i].available;
    }
    out.record.push_view(f, m, g);
  };
  std::vector<Vector> hiddens = initial_hiddens(team);
  env::WorldState world = std::move(snap.state);
  std::vector<env::AgentObservation> obs = std::move(snap.observations);
  push_view(obs, snap.global_state);
  while (!world.terminated) {
    TeamStepQ tq = team_q_values(team, obs, hiddens);
    std::vector<std::vector<bool>> masks(n);
    for (int i = 0; i < n; ++i) masks[i] = obs[i].available;
    const std::vector<int> actions = act_epsilon_greedy(tq.q, masks, epsilon, rng);
    env::StepResult res = env.step(world, actions);
    out.record.push_transition(actions, res.outcome.reward);
    push_view(res.observations, res.global_state);
    if (res.outcome.terminated) out.record.terminated = !res.outcome.timed_out;
    world = std::move(res.state);
    obs = std::move(res.observations);
  }
  out.record.won = world.team_won;
  out.reward = world.cumulative_reward;
  out.won = world.team_won;
  return out;
}

nlohmann::json team_config_json(const env::EnvConfig& env_config,
                                const TrainConfig& config, std::uint64_t seed) {
  return {{"env", env_config}, {"train", config}, {"seed", seed}};
}

env::EnvConfig env_config_from_checkpoint(const diffnet::Checkpoint& ckpt) {
  try {
    return ckpt.config.at("env").get<env::EnvConfig>();
  } catch (const std::exception& e) {
    throw diffnet::CheckpointError(std::string("checkpoint has no env config: ") +
                                   e.what());
  }
}

TrainResult train(const env::EnvConfig& env_config, const TrainConfig& config,
                  std::uint64_t seed, const TrainProgress& progress) {
  config.validate();
  const env::MicroBattle env(env_config);
  TrainResult out;
  out.team = TeamModel::create(env_config, config.hidden_dim, config.embed_dim,
                               derive_seed(seed, 0));
  TeamModel target = out.team;
  diffnet::Optimizer opt(config.optimizer);
  ReplayBuffer buffer(config.buffer_capacity);
  Rng act_rng(derive_seed(seed, 1));
  Rng sample_rng(derive_seed(seed, 2));
  const std::uint64_t env_seed = derive_seed(seed, 3);
  const std::uint64_t eval_seed = derive_seed(seed, 4);

  double loss_sum = 0.0;
  int loss_count = 0;
  for (int e = 0; e < config.n_episodes; ++e) {
    const double eps = config.epsilon_at(e);
    CollectedEpisode ep = collect_episode(
        env, out.team, episode_env_seed(env_seed, e), eps, act_rng);
    buffer.insert(std::move(ep.record));

    if (buffer.can_sample(config.batch_size)) {
      EpisodeBatch batch(buffer.sample(config.batch_size, sample_rng));
      TdLoss td = qmix_td_loss(batch, out.team, target, config.gamma);
      std::vector<diffnet::ParamGroup> groups;
      for (std::size_t k = 0; k < out.team.nets.size(); ++k)
        groups.push_back({"net" + std::to_string(k), &out.team.nets[k].params,
                          &td.grads.nets[k]});
      groups.push_back({"mixer", &out.team.mixer.params, &td.grads.mixer});
      opt.step(groups);
      ++out.updates;
      loss_sum += td.loss;
      ++loss_count;
      if (out.updates % config.target_sync_period == 0) {
        for (std::size_t k = 0; k < target.nets.size(); ++k)
          diffnet::target_sync(out.team.nets[k].params, target.nets[k].params,
                               diffnet::SyncMode::kHard);
        diffnet::target_sync(out.team.mixer.params, target.mixer.params,
                             diffnet::SyncMode::kHard);
      }
    }

    const bool eval_now =
        config.eval_every > 0 && (e + 1) % config.eval_every == 0;
    if ((e + 1) % config.log_every == 0 || eval_now ||
        e + 1 == config.n_episodes) {
      TrainLogRow row;
      row.episode = e + 1;
      row.loss = loss_count ? loss_sum / loss_count
                            : std::numeric_limits<double>::quiet_NaN();
      row.epsilon = eps;
      if (eval_now) {
        const EvalStats st = evaluate(env, out.team, config.eval_episodes, eval_seed);
        row.eval_win_rate = st.win_rate();
        row.eval_reward = st.avg_reward();
      }
      out.log.push_back(row);
      if (progress) progress(row);
      loss_sum = 0.0;
      loss_count = 0;
    }
  }
  out.checkpoint =
      to_checkpoint(out.team, team_config_json(env_config, config, seed), seed);
  return out;
}

}  // namespace marl::qmix
