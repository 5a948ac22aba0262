#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "marl/advpolicy/selectors.hpp"
#include "marl/diffnet/checkpoint.hpp"
#include "marl/env/micro_battle.hpp"
#include "marl/qmix/replay_buffer.hpp"
#include "marl/qmix/train.hpp"

namespace marl::advpolicy {

// Adversary DQN settings: the team's training knobs plus the shaping weight.
// Per-step adversary reward is -R_t - lambda * d_diff^2 where
//   d_diff = Q_v(o, a_victim_greedy) - Q_v(o, a_adversary)
// is measured with the frozen victim network on the clean observation.
struct AdvTrainConfig {
  qmix::TrainConfig train{};
  double lambda = 0.1;
  // Return the periodic-evaluation snapshot with the lowest team reward
  // instead of the final weights (needs eval_every > 0).
  bool keep_best = true;

  void validate() const;
};

void to_json(nlohmann::json& j, const AdvTrainConfig& c);
void from_json(const nlohmann::json& j, AdvTrainConfig& c);

struct AdvTrainResult {
  AdvPolicy policy;
  diffnet::Checkpoint checkpoint;
  std::vector<qmix::TrainLogRow> log;
  long long updates = 0;
};

// Shaping penalty lambda * d_diff^2 for one step.
double owr_penalty(const Vector& victim_q, int victim_greedy, int adversary_action,
                   double lambda);

// Collects the adversary's single-agent episode while it controls the victim
// epsilon-greedily. Teammates stay greedy.
class AdversaryTrainingHook : public qmix::VictimHook {
 public:
  AdversaryTrainingHook(int victim, const AgentNet& net, int n_actions,
                        double epsilon, double lambda, Rng& rng);
  int victim() const override { return victim_; }
  void begin_episode(int episode, std::uint64_t seed,
                     const env::Snapshot& start) override;
  qmix::HookDecision decide(const qmix::VictimView& view) override;
  void after_step(const qmix::StepFeedback& feedback) override;

  qmix::EpisodeRecord take_record() { return std::move(record_); }

 private:
  int victim_;
  const AgentNet& net_;
  int n_actions_;
  double epsilon_;
  double lambda_;
  Rng& rng_;
  Vector hidden_;
  qmix::EpisodeRecord record_;
  int pending_action_ = 0;
  double pending_penalty_ = 0.0;
};

// The shared OW / OWR training loop. variant must be kOw or kOwr; lambda is
// taken from the config as given (0 reproduces OW exactly).
AdvTrainResult train_adversary(const env::EnvConfig& env_config,
                               const diffnet::Checkpoint& team_checkpoint,
                               int victim, const AdvTrainConfig& config,
                               AdvVariant variant, std::uint64_t seed,
                               const qmix::TrainProgress& progress = {});

// OW requires lambda == 0, OWR requires lambda > 0.
AdvTrainResult train_ow(const env::EnvConfig& env_config,
                        const diffnet::Checkpoint& team_checkpoint, int victim,
                        const AdvTrainConfig& config, std::uint64_t seed,
                        const qmix::TrainProgress& progress = {});
AdvTrainResult train_owr(const env::EnvConfig& env_config,
                         const diffnet::Checkpoint& team_checkpoint, int victim,
                         const AdvTrainConfig& config, std::uint64_t seed,
                         const qmix::TrainProgress& progress = {});

// Adversary checkpoint: kind "adversary", method "ow" | "owr", a single agent
// network "adversary"; config records victim, lambda and the team's content hash.
AdvPolicy adversary_from_checkpoint(const diffnet::Checkpoint& ckpt);
std::string adversary_team_hash(const diffnet::Checkpoint& ckpt);

}  // namespace marl::advpolicy
