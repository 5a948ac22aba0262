#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <nlohmann/json.hpp>

#include "marl/diffnet/optimizer.hpp"
#include "marl/env/micro_battle.hpp"
#include "marl/qmix/replay_buffer.hpp"
#include "marl/qmix/team.hpp"

namespace marl::qmix {

struct TrainConfig {
  double gamma = 0.99;
  diffnet::OptimizerConfig optimizer{};
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  double epsilon_anneal_fraction = 0.5;  // of n_episodes
  int buffer_capacity = 2000;
  int batch_size = 32;
  int target_sync_period = 200;  // in updates
  int n_episodes = 5000;
  int hidden_dim = 64;
  int embed_dim = 32;
  int eval_every = 500;   // episodes; 0 disables periodic evaluation
  int eval_episodes = 50;
  int log_every = 50;

  void validate() const;
  double epsilon_at(int episode) const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

struct TrainLogRow {
  int episode = 0;
  double loss = 0.0;  // mean over updates since the previous row (NaN if none)
  double epsilon = 0.0;
  double eval_win_rate = -1.0;  // < 0 when no evaluation ran at this row
  double eval_reward = 0.0;
};

void write_train_log_csv(const std::vector<TrainLogRow>& rows, std::ostream& out);

struct TrainResult {
  TeamModel team;
  diffnet::Checkpoint checkpoint;
  std::vector<TrainLogRow> log;
  long long updates = 0;
};

using TrainProgress = std::function<void(const TrainLogRow&)>;

// One epsilon-greedy episode of the whole team.
struct CollectedEpisode {
  EpisodeRecord record;
  double reward = 0.0;
  bool won = false;
};
CollectedEpisode collect_episode(const env::MicroBattle& env,
                                 const TeamModel& team, std::uint64_t env_seed,
                                 double epsilon, Rng& rng);

// Centralized QMIX training; deterministic given (configs, seed).
TrainResult train(const env::EnvConfig& env_config, const TrainConfig& config,
                  std::uint64_t seed, const TrainProgress& progress = {});

// Config document stored inside team checkpoints.
nlohmann::json team_config_json(const env::EnvConfig& env_config,
                                const TrainConfig& config, std::uint64_t seed);
env::EnvConfig env_config_from_checkpoint(const diffnet::Checkpoint& ckpt);

}  // namespace marl::qmix
