#include "marl/qmix/team.hpp"

#include <stdexcept>

namespace marl::qmix {

namespace {
const char* kNetNames[2] = {"agent_ranged", "agent_melee"};
}

std::vector<int> TeamModel::agents_of(int k) const {
  std::vector<int> out;
  for (int i = 0; i < n_agents(); ++i)
    if (agent_net[i] == k) out.push_back(i);
  return out;
}

TeamModel TeamModel::create(const env::EnvConfig& env, int hidden_dim,
                            int embed_dim, std::uint64_t seed) {
  TeamModel team;
  diffnet::AgentNetConfig c;
  c.input_dim = env::kObsDim;
  c.hidden_dim = hidden_dim;
  c.n_actions = env.n_actions();
  c.arch = diffnet::AgentArch::kRecurrent;
  team.nets.push_back(AgentNet::create(c, derive_seed(seed, 1)));
  team.nets.push_back(AgentNet::create(c, derive_seed(seed, 2)));
  for (int i = 0; i < env.n_ally_ranged; ++i) team.agent_net.push_back(0);
  for (int i = 0; i < env.n_ally_melee; ++i) team.agent_net.push_back(1);
  team.mixer = MixingNet::create(
      {env.n_allies(), env.state_dim(), embed_dim}, derive_seed(seed, 3));
  return team;
}

diffnet::Checkpoint to_checkpoint(const TeamModel& team,
                                  const nlohmann::json& config,
                                  std::uint64_t seed) {
  diffnet::Checkpoint ckpt;
  ckpt.kind = "team";
  ckpt.method = "qmix";
  ckpt.rng_seed = seed;
  ckpt.config = config;
  ckpt.config["agent_net"] = team.agent_net;
  for (std::size_t k = 0; k < team.nets.size(); ++k)
    ckpt.agents.emplace(kNetNames[k], team.nets[k]);
  ckpt.mixers.emplace("mixer", team.mixer);
  return ckpt;
}

TeamModel team_from_checkpoint(const diffnet::Checkpoint& ckpt) {
  if (ckpt.kind != "team")
    throw diffnet::CheckpointError("expected a team checkpoint, got kind '" +
                                   ckpt.kind + "'");
  TeamModel team;
  try {
    for (const char* name : kNetNames) team.nets.push_back(ckpt.agents.at(name));
    team.mixer = ckpt.mixers.at("mixer");
    team.agent_net = ckpt.config.at("agent_net").get<std::vector<int>>();
  } catch (const std::exception& e) {
    throw diffnet::CheckpointError(std::string("incomplete team checkpoint: ") +
                                   e.what());
  }
  return team;
}

int masked_argmax(std::span<const double> q, const std::vector<bool>& mask) {
  if (q.size() != mask.size())
    throw std::invalid_argument("masked_argmax: length mismatch");
  int best = -1;
  for (std::size_t a = 0; a < q.size(); ++a) {
    if (!mask[a]) continue;
    if (best < 0 || q[a] > q[best]) best = static_cast<int>(a);
  }
  if (best < 0) throw std::invalid_argument("masked_argmax: empty mask");
  return best;
}

int masked_argmax(const Vector& q, const std::vector<bool>& mask) {
  return masked_argmax(std::span<const double>(q.data(), q.size()), mask);
}

std::vector<Vector> initial_hiddens(const TeamModel& team) {
  std::vector<Vector> h;
  for (int i = 0; i < team.n_agents(); ++i)
    h.push_back(Vector::Zero(team.net_for(i).config.state_rows()));
  return h;
}

TeamStepQ team_q_values(const TeamModel& team,
                        const std::vector<env::AgentObservation>& obs,
                        std::vector<Vector>& hiddens) {
  // One column per call: the same arithmetic path as diffnet::q_values, so a
  // re-evaluation of the same observation reproduces these values bit-exactly.
  TeamStepQ out;
  out.q.resize(team.n_agents());
  for (int i = 0; i < team.n_agents(); ++i) {
    const AgentNet& net = team.net_for(i);
    Vector h_new;
    out.q[i] = diffnet::q_values(
        net, obs[i].features,
        std::span<const double>(hiddens[i].data(), hiddens[i].size()), &h_new);
    if (net.config.recurrent()) hiddens[i] = std::move(h_new);
  }
  return out;
}

std::vector<int> act_epsilon_greedy(const std::vector<Vector>& q,
                                    const std::vector<std::vector<bool>>& masks,
                                    double epsilon, Rng& rng) {
  if (epsilon < 0.0 || epsilon > 1.0)
    throw std::invalid_argument("epsilon must be in [0, 1]");
  std::vector<int> actions(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (epsilon > 0.0 && rng.uniform() < epsilon)
      actions[i] = rng.pick_available(masks[i]);
    else
      actions[i] = masked_argmax(q[i], masks[i]);
  }
  return actions;
}

}  // namespace marl::qmix
