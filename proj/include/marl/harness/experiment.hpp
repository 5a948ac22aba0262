#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "marl/advexample/attacks.hpp"
#include "marl/advpolicy/selectors.hpp"
#include "marl/diffnet/checkpoint.hpp"
#include "marl/env/micro_battle.hpp"
#include "marl/qmix/rollout.hpp"
#include "marl/qmix/team.hpp"

namespace marl::harness {

inline constexpr int kSchemaVersion = 1;
inline constexpr int kDefaultDirectEpisodes = 500;
inline constexpr int kDefaultAttackEpisodes = 100;

// target_policy: none | greedy | random | lw | qmix-worst | ow | owr
//   ("none" means the victim is left alone; "greedy" overrides it with its
//   own action, which must reproduce the baseline)
// attack: none | fgsm | it-fgsm | jsma | d-jsma
//   none with a policy = direct control; jsma uses the fixed `theta`
struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string team_checkpoint;
  std::map<std::string, std::string> adversaries;  // "ow"/"owr" -> checkpoint
  int victim = 0;
  std::string target_policy = "none";
  std::string attack = "none";
  advexample::AttackBudget budget{};
  double theta = 0.9;
  int n_episodes = 0;  // 0 picks 500 (direct control) or 100 (perturbation)
  std::uint64_t seed = 1;
  std::string output_dir = "out";
  bool write_trace = false;
  std::string label;  // free text carried into reports

  void validate() const;
  int episodes() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
void from_json(const nlohmann::json& j, ExperimentConfig& c);

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// MARL_REDTEAM_SEED, if set, replaces the config seed. Returns true if applied.
bool apply_seed_override(std::uint64_t& seed);

// Checkpoints resolved for a config. Adversary checkpoints must have been
// trained against exactly this team (matching config hash) and this victim.
struct Loaded {
  diffnet::Checkpoint team_checkpoint;
  qmix::TeamModel team;
  env::EnvConfig env;
  std::map<std::string, diffnet::Checkpoint> adversary_checkpoints;
  std::map<std::string, advpolicy::AdvPolicy> adversaries;
};

class ExperimentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Loaded load_checkpoints(const ExperimentConfig& config);
// Same checks for already loaded documents (used by tests and the CLI).
Loaded assemble(const diffnet::Checkpoint& team,
                const std::map<std::string, diffnet::Checkpoint>& adversaries,
                int victim);

struct Histogram {
  std::vector<double> edges;  // bin k covers [edges[k], edges[k+1]), last closed
  std::vector<long long> counts;
  long long total() const;
};

// Fixed L1 bins so rows from different runs line up.
Histogram l1_histogram(const std::vector<double>& values);

struct Interval {
  double low = 0.0;
  double high = 0.0;
};
// 95% Wilson score interval for k successes out of n.
Interval wilson_interval(long long k, long long n);

struct MetricsRow {
  std::string label;
  std::string target_policy;
  std::string attack;
  double param = 0.0;  // epsilon (FGSM family) or theta (jsma); 0 otherwise
  double avg_reward = 0.0;
  double reward_stderr = 0.0;
  double win_rate = 0.0;
  Interval win_ci;
  double misclassification_rate = 0.0;
  double target_success_rate = 0.0;
  Interval success_ci;
  double avg_l1 = 0.0;
  long long attacked_steps = 0;
  Histogram l1_hist;
  int n_episodes = 0;
  std::uint64_t seed = 0;
  qmix::SafetyTally safety;
  std::vector<double> episode_rewards;
};

nlohmann::json to_json(const MetricsRow& row);

MetricsRow metrics_from_stats(const qmix::EvalStats& stats);

// Victim hook composing a target selector with a perturbation method.
class TwoStepHook : public qmix::VictimHook {
 public:
  TwoStepHook(int victim, advpolicy::TargetSelector& selector, std::string attack,
              advexample::AttackBudget budget, double theta);
  int victim() const override { return victim_; }
  void begin_episode(int episode, std::uint64_t seed,
                     const env::Snapshot& start) override;
  qmix::HookDecision decide(const qmix::VictimView& view) override;

 private:
  int victim_;
  advpolicy::TargetSelector& selector_;
  std::string attack_;
  advexample::AttackBudget budget_;
  double theta_;
};

std::unique_ptr<advpolicy::TargetSelector> make_target_selector(
    const std::string& target_policy, const Loaded& loaded);

MetricsRow run_baseline(const ExperimentConfig& config, const Loaded& loaded,
                        qmix::TraceSink* trace = nullptr);
MetricsRow run_direct_control(const ExperimentConfig& config, const Loaded& loaded,
                              qmix::TraceSink* trace = nullptr);
MetricsRow run_two_step(const ExperimentConfig& config, const Loaded& loaded,
                        qmix::TraceSink* trace = nullptr);
// Dispatches on (target_policy, attack).
MetricsRow run_experiment(const ExperimentConfig& config, const Loaded& loaded,
                          qmix::TraceSink* trace = nullptr);

// axis: "epsilon" | "theta" (numbers) or "method" (strings of the form
// "<target_policy>" or "<target_policy>+<attack>"). All runs share the seed.
std::vector<MetricsRow> sweep(const ExperimentConfig& base, const Loaded& loaded,
                              const std::string& axis,
                              const nlohmann::json& values);

// Report files: CSV with two decimals (rates in percent) and JSON with full
// precision plus histograms. Output is a pure function of the rows.
inline constexpr const char* kCsvHeader =
    "label,target_policy,attack,param,n_episodes,seed,avg_reward,reward_stderr,"
    "win_rate_pct,win_ci_low_pct,win_ci_high_pct,misclassification_pct,"
    "target_success_pct,avg_l1,attacked_steps";
void write_csv(const std::vector<MetricsRow>& rows, std::ostream& out);
void write_json(const std::vector<MetricsRow>& rows, std::ostream& out);
void write_report(const std::vector<MetricsRow>& rows,
                  const std::filesystem::path& dir, const std::string& stem);
std::vector<MetricsRow> rows_from_json(const nlohmann::json& j);

struct RunManifest {
  nlohmann::json config;
  std::string code_version;
  std::map<std::string, std::string> checkpoint_hashes;
  double wall_seconds = 0.0;
};
nlohmann::json to_json(const RunManifest& m);
RunManifest make_manifest(const ExperimentConfig& config, const Loaded& loaded);
std::string code_version();

// Line-delimited JSON trace writer.
class JsonlTrace : public qmix::TraceSink {
 public:
  explicit JsonlTrace(std::ostream& out) : out_(out) {}
  void record(const nlohmann::json& step) override;

 private:
  std::ostream& out_;
};

}  // namespace marl::harness
