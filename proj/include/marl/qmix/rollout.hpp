#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "marl/env/micro_battle.hpp"
#include "marl/qmix/team.hpp"

namespace marl::qmix {

// What a victim hook sees at every step of an episode, before the victim acts.
struct VictimView {
  int episode = 0;
  int step = 0;
  int victim = 0;
  bool victim_alive = false;
  const env::MicroBattle* env = nullptr;
  const env::WorldState* world = nullptr;
  const TeamModel* team = nullptr;
  const env::AgentObservation* clean_obs = nullptr;
  const Vector* hidden_before = nullptr;  // victim hidden state entering the step
  const Vector* victim_q = nullptr;       // victim Q-values on the clean obs
  int clean_action = 0;                   // victim's own masked argmax
  std::vector<double> chosen_qs;          // every agent's greedy chosen Q (clean)
  const std::vector<double>* global_state = nullptr;
};

struct HookDecision {
  enum class Kind { kNone, kOverride, kPerturb };
  Kind kind = Kind::kNone;
  int target = -1;  // override action, or the action the perturbation aims for
  bool untargeted = false;  // kPerturb: success means "action changed"
  std::vector<double> perturbed;  // kPerturb only
  bool reported_success = false;  // kPerturb: attack's own success claim
  int iterations = 0;
  double theta_used = 0.0;
};

struct StepFeedback {
  int victim_action = 0;
  const env::StepResult* result = nullptr;
};

class VictimHook {
 public:
  virtual ~VictimHook() = default;
  virtual int victim() const = 0;
  virtual void begin_episode(int /*episode*/, std::uint64_t /*seed*/,
                             const env::Snapshot& /*start*/) {}
  virtual HookDecision decide(const VictimView& view) = 0;
  virtual void after_step(const StepFeedback& /*feedback*/) {}
};

// Counters of invariant violations observed while attacks ran.
struct SafetyTally {
  long long box_violations = 0;          // perturbed feature outside [-1, 1]
  long long success_mismatches = 0;      // reported success != re-evaluation
  long long unavailable_selections = 0;  // hook target not mask-available
  long long total() const {
    return box_violations + success_mismatches + unavailable_selections;
  }
};

struct AttackRecord {
  int step = 0;
  int target = -1;
  int clean_action = 0;
  int taken_action = 0;
  bool success = false;
  bool changed = false;
  double l1 = 0.0;
  double linf = 0.0;
  int iterations = 0;
  double theta_used = 0.0;
};

struct EpisodeSummary {
  double reward = 0.0;
  bool won = false;
  int steps = 0;
  std::vector<AttackRecord> attacks;
  SafetyTally safety;
};

// Receives one JSON object per step (episode trace format).
class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void record(const nlohmann::json& step) = 0;
};

// Greedy team execution (epsilon = 0) for one episode seeded by `env_seed`.
// If a hook is given it is consulted at every step for its victim.
EpisodeSummary run_episode(const env::MicroBattle& env, const TeamModel& team,
                           int episode, std::uint64_t env_seed,
                           std::uint64_t hook_seed, VictimHook* hook,
                           TraceSink* trace);

struct EvalStats {
  int n_episodes = 0;
  int wins = 0;
  double total_reward = 0.0;
  std::vector<double> episode_rewards;
  long long attacked_steps = 0;
  long long successes = 0;
  long long changed = 0;
  std::vector<double> l1;  // one per attacked step, in execution order
  double max_linf = 0.0;
  SafetyTally safety;

  double avg_reward() const { return n_episodes ? total_reward / n_episodes : 0.0; }
  double win_rate() const {
    return n_episodes ? static_cast<double>(wins) / n_episodes : 0.0;
  }
  double misclassification_rate() const;
  double target_success_rate() const;
  double avg_l1() const;
};

// Episode e uses env seed derive_seed(seed, e), so runs sharing a seed are
// paired episode-by-episode.
EvalStats evaluate(const env::MicroBattle& env, const TeamModel& team,
                   int n_episodes, std::uint64_t seed,
                   VictimHook* hook = nullptr, TraceSink* trace = nullptr);

std::uint64_t episode_env_seed(std::uint64_t seed, int episode);
std::uint64_t episode_hook_seed(std::uint64_t seed, int episode);

nlohmann::json units_to_json(const env::WorldState& world);

}  // namespace marl::qmix
