#pragma once

#include <cstdint>
#include <vector>

#include "marl/common/rng.hpp"
#include "marl/diffnet/agent_net.hpp"
#include "marl/diffnet/checkpoint.hpp"
#include "marl/diffnet/mixing_net.hpp"
#include "marl/env/micro_battle.hpp"

namespace marl::qmix {

using diffnet::AgentNet;
using diffnet::Matrix;
using diffnet::MixingNet;
using diffnet::Vector;

// Agent networks are shared per unit class; agent_net[i] selects the entry of
// `nets` that drives ally i. The one-hot agent id inside the observation keeps
// shared networks agent-aware.
struct TeamModel {
  std::vector<AgentNet> nets;
  std::vector<int> agent_net;
  MixingNet mixer;

  int n_agents() const { return static_cast<int>(agent_net.size()); }
  const AgentNet& net_for(int agent) const { return nets.at(agent_net.at(agent)); }
  // Agents driven by net `k`, ascending.
  std::vector<int> agents_of(int k) const;

  static TeamModel create(const env::EnvConfig& env, int hidden_dim,
                          int embed_dim, std::uint64_t seed);
};

diffnet::Checkpoint to_checkpoint(const TeamModel& team,
                                  const nlohmann::json& config,
                                  std::uint64_t seed);
TeamModel team_from_checkpoint(const diffnet::Checkpoint& ckpt);

// Argmax over available entries; ties go to the lowest index.
int masked_argmax(std::span<const double> q, const std::vector<bool>& mask);
int masked_argmax(const Vector& q, const std::vector<bool>& mask);

// Per-agent forward on one step. hiddens[i] is updated in place.
struct TeamStepQ {
  std::vector<Vector> q;  // per agent
};
TeamStepQ team_q_values(const TeamModel& team,
                        const std::vector<env::AgentObservation>& obs,
                        std::vector<Vector>& hiddens);

std::vector<Vector> initial_hiddens(const TeamModel& team);

// With probability epsilon (per agent) a uniform available action, otherwise
// the masked argmax. epsilon == 0 consumes no randomness.
std::vector<int> act_epsilon_greedy(const std::vector<Vector>& q,
                                    const std::vector<std::vector<bool>>& masks,
                                    double epsilon, Rng& rng);

}  // namespace marl::qmix
