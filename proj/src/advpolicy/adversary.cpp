#include "marl/advpolicy/adversary.hpp"

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "marl/env/config_json.hpp"
#include "marl/qmix/learner.hpp"
#include "marl/qmix/rollout.hpp"
#include "marl/qmix/team.hpp"

namespace marl::advpolicy {

void AdvTrainConfig::validate() const {
  train.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda))
    throw std::invalid_argument("AdvTrainConfig: lambda must be >= 0");
}

void to_json(nlohmann::json& j, const AdvTrainConfig& c) {
  j = c.train;
  j["lambda"] = c.lambda;
  j["keep_best"] = c.keep_best;
}

void from_json(const nlohmann::json& j, AdvTrainConfig& c) {
  nlohmann::json rest = j;
  if (rest.contains("lambda")) {
    c.lambda = rest.at("lambda").get<double>();
    rest.erase("lambda");
  }
  if (rest.contains("keep_best")) {
    c.keep_best = rest.at("keep_best").get<bool>();
    rest.erase("keep_best");
  }
  qmix::from_json(rest, c.train);
}

double owr_penalty(const Vector& victim_q, int victim_greedy, int adversary_action,
                   double lambda) {
  const double d = victim_q(victim_greedy) - victim_q(adversary_action);
  return lambda * d * d;
}

AdversaryTrainingHook::AdversaryTrainingHook(int victim, const AgentNet& net,
                                             int n_actions, double epsilon,
                                             double lambda, Rng& rng)
    : victim_(victim),
      net_(net),
      n_actions_(n_actions),
      epsilon_(epsilon),
      lambda_(lambda),
      rng_(rng) {}

void AdversaryTrainingHook::begin_episode(int, std::uint64_t,
                                          const env::Snapshot& start) {
  hidden_ = Vector::Zero(net_.config.state_rows());
  record_ = qmix::EpisodeRecord(1, env::kObsDim, 0, n_actions_);
  const env::AgentObservation& o = start.observations.at(victim_);
  record_.push_view({o.features}, {o.available}, {});
}

qmix::HookDecision AdversaryTrainingHook::decide(const qmix::VictimView& view) {
  const env::AgentObservation& o = *view.clean_obs;
  Vector h_new;
  const Vector q = diffnet::q_values(
      net_, o.features, std::span<const double>(hidden_.data(), hidden_.size()),
      &h_new);
  if (net_.config.recurrent()) hidden_ = std::move(h_new);
  if (epsilon_ > 0.0 && rng_.uniform() < epsilon_)
    pending_action_ = rng_.pick_available(o.available);
  else
    pending_action_ = qmix::masked_argmax(q, o.available);

  qmix::HookDecision d;
  pending_penalty_ = 0.0;
  if (!view.victim_alive) return d;
  if (lambda_ > 0.0)
    pending_penalty_ =
        owr_penalty(*view.victim_q, view.clean_action, pending_action_, lambda_);
  d.kind = qmix::HookDecision::Kind::kOverride;
  d.target = pending_action_;
  return d;
}

void AdversaryTrainingHook::after_step(const qmix::StepFeedback& feedback) {
  const env::StepResult& res = *feedback.result;
  record_.push_transition({pending_action_},
                          -res.outcome.reward - pending_penalty_);
  const env::AgentObservation& o = res.observations.at(victim_);
  record_.push_view({o.features}, {o.available}, {});
  if (res.outcome.terminated) record_.terminated = !res.outcome.timed_out;
}

namespace {

nlohmann::json adversary_config_json(const env::EnvConfig& env_config,
                                     const AdvTrainConfig& config, int victim,
                                     const std::string& team_hash,
                                     std::uint64_t seed) {
  return {{"env", env_config},
          {"train", config},
          {"victim", victim},
          {"team_hash", team_hash},
          {"seed", seed}};
}

}  // namespace

AdvTrainResult train_adversary(const env::EnvConfig& env_config,
                               const diffnet::Checkpoint& team_checkpoint,
                               int victim, const AdvTrainConfig& config,
                               AdvVariant variant, std::uint64_t seed,
                               const qmix::TrainProgress& progress) {
  config.validate();
  if (variant != AdvVariant::kOw && variant != AdvVariant::kOwr)
    throw std::invalid_argument("train_adversary: variant must be ow or owr");
  const qmix::TeamModel team = qmix::team_from_checkpoint(team_checkpoint);
  if (victim < 0 || victim >= team.n_agents())
    throw std::invalid_argument("train_adversary: victim index out of range");
  const env::MicroBattle env(env_config);
  const qmix::TrainConfig& tc = config.train;

  diffnet::AgentNetConfig nc;
  nc.input_dim = env::kObsDim;
  nc.hidden_dim = tc.hidden_dim;
  nc.n_actions = env.n_actions();
  nc.arch = diffnet::AgentArch::kRecurrent;
  AgentNet online = AgentNet::create(nc, derive_seed(seed, 0));
  AgentNet target = online;
  diffnet::Optimizer opt(tc.optimizer);
  qmix::ReplayBuffer buffer(tc.buffer_capacity);
  Rng act_rng(derive_seed(seed, 1));
  Rng sample_rng(derive_seed(seed, 2));
  const std::uint64_t env_seed = derive_seed(seed, 3);
  const std::uint64_t eval_seed = derive_seed(seed, 4);

  AdvTrainResult out;
  std::optional<AgentNet> best;
  double best_reward = 0.0;
  double loss_sum = 0.0;
  int loss_count = 0;
  for (int e = 0; e < tc.n_episodes; ++e) {
    const double eps = tc.epsilon_at(e);
    AdversaryTrainingHook hook(victim, online, env.n_actions(), eps,
                               config.lambda, act_rng);
    qmix::run_episode(env, team, e, qmix::episode_env_seed(env_seed, e), 0,
                      &hook, nullptr);
    buffer.insert(hook.take_record());

    if (buffer.can_sample(tc.batch_size)) {
      qmix::EpisodeBatch batch(buffer.sample(tc.batch_size, sample_rng));
      qmix::DqnTdLoss td =
          qmix::recurrent_dqn_td_loss(batch, online, target, tc.gamma);
      std::vector<diffnet::ParamGroup> groups{
          {"adversary", &online.params, &td.grads}};
      opt.step(groups);
      ++out.updates;
      loss_sum += td.loss;
      ++loss_count;
      if (out.updates % tc.target_sync_period == 0)
        diffnet::target_sync(online.params, target.params,
                             diffnet::SyncMode::kHard);
    }

    const bool eval_now = tc.eval_every > 0 && (e + 1) % tc.eval_every == 0;
    if ((e + 1) % tc.log_every == 0 || eval_now || e + 1 == tc.n_episodes) {
      qmix::TrainLogRow row;
      row.episode = e + 1;
      row.loss = loss_count ? loss_sum / loss_count
                            : std::numeric_limits<double>::quiet_NaN();
      row.epsilon = eps;
      if (eval_now) {
        NetworkSelector sel(online);
        DirectControlHook dc(victim, sel);
        const qmix::EvalStats st =
            qmix::evaluate(env, team, tc.eval_episodes, eval_seed, &dc);
        row.eval_win_rate = st.win_rate();
        row.eval_reward = st.avg_reward();
        if (config.keep_best && (!best || st.avg_reward() < best_reward)) {
          best = online;
          best_reward = st.avg_reward();
        }
      }
      out.log.push_back(row);
      if (progress) progress(row);
      loss_sum = 0.0;
      loss_count = 0;
    }
  }

  out.policy.variant = variant;
  out.policy.victim = victim;
  // keep_best: the snapshot with the lowest evaluation team reward
  if (best) online = *best;
  out.policy.net = online;
  out.policy.lambda = config.lambda;
  out.checkpoint.kind = "adversary";
  out.checkpoint.method = to_string(variant);
  out.checkpoint.rng_seed = seed;
  out.checkpoint.config = adversary_config_json(
      env_config, config, victim, diffnet::content_hash(team_checkpoint), seed);
  out.checkpoint.agents.emplace("adversary", online);
  return out;
}

AdvTrainResult train_ow(const env::EnvConfig& env_config,
                        const diffnet::Checkpoint& team_checkpoint, int victim,
                        const AdvTrainConfig& config, std::uint64_t seed,
                        const qmix::TrainProgress& progress) {
  if (config.lambda != 0.0)
    throw std::invalid_argument("train_ow: lambda must be 0 (use train_owr)");
  return train_adversary(env_config, team_checkpoint, victim, config,
                         AdvVariant::kOw, seed, progress);
}

AdvTrainResult train_owr(const env::EnvConfig& env_config,
                         const diffnet::Checkpoint& team_checkpoint, int victim,
                         const AdvTrainConfig& config, std::uint64_t seed,
                         const qmix::TrainProgress& progress) {
  if (!(config.lambda > 0.0))
    throw std::invalid_argument("train_owr: lambda must be > 0");
  return train_adversary(env_config, team_checkpoint, victim, config,
                         AdvVariant::kOwr, seed, progress);
}

AdvPolicy adversary_from_checkpoint(const diffnet::Checkpoint& ckpt) {
  if (ckpt.kind != "adversary")
    throw diffnet::CheckpointError("expected an adversary checkpoint, got kind '" +
                                   ckpt.kind + "'");
  AdvPolicy p;
  try {
    p.variant = adv_variant_from_string(ckpt.method);
    p.victim = ckpt.config.at("victim").get<int>();
    p.lambda = ckpt.config.at("train").at("lambda").get<double>();
    p.net = ckpt.agents.at("adversary");
  } catch (const std::exception& e) {
    throw diffnet::CheckpointError(std::string("incomplete adversary checkpoint: ") +
                                   e.what());
  }
  if (p.variant != AdvVariant::kOw && p.variant != AdvVariant::kOwr)
    throw diffnet::CheckpointError("adversary checkpoint method must be ow or owr");
  if (p.net->config.input_dim != env::kObsDim)
    throw diffnet::CheckpointError("adversary input width != observation length");
  return p;
}

std::string adversary_team_hash(const diffnet::Checkpoint& ckpt) {
  try {
    return ckpt.config.at("team_hash").get<std::string>();
  } catch (const std::exception& e) {
    throw diffnet::CheckpointError(std::string("adversary checkpoint: ") + e.what());
  }
}

}  // namespace marl::advpolicy
