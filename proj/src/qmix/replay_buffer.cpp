#include "marl/qmix/replay_buffer.hpp"

#include <numeric>
#include <stdexcept>

namespace marl::qmix {

EpisodeRecord::EpisodeRecord(int n_agents_, int obs_dim_, int state_dim_,
                             int n_actions_)
    : n_agents(n_agents_),
      obs_dim(obs_dim_),
      state_dim(state_dim_),
      n_actions(n_actions_) {}

void EpisodeRecord::push_view(const std::vector<std::vector<double>>& agent_obs,
                              const std::vector<std::vector<bool>>& masks,
                              const std::vector<double>& state) {
  if (static_cast<int>(agent_obs.size()) != n_agents ||
      static_cast<int>(masks.size()) != n_agents ||
      static_cast<int>(state.size()) != state_dim)
    throw std::invalid_argument("EpisodeRecord::push_view: shape mismatch");
  for (int i = 0; i < n_agents; ++i) {
    if (static_cast<int>(agent_obs[i].size()) != obs_dim ||
        static_cast<int>(masks[i].size()) != n_actions)
      throw std::invalid_argument("EpisodeRecord::push_view: agent shape");
    obs.insert(obs.end(), agent_obs[i].begin(), agent_obs[i].end());
    for (bool m : masks[i]) avail.push_back(m ? 1 : 0);
  }
  states.insert(states.end(), state.begin(), state.end());
}

void EpisodeRecord::push_transition(const std::vector<int>& joint_action,
                                    double reward) {
  if (static_cast<int>(joint_action.size()) != n_agents)
    throw std::invalid_argument("EpisodeRecord::push_transition: shape");
  actions.insert(actions.end(), joint_action.begin(), joint_action.end());
  rewards.push_back(reward);
  ++length;
}

bool EpisodeRecord::complete() const {
  const auto views = static_cast<std::size_t>(length + 1);
  const auto n = static_cast<std::size_t>(n_agents);
  return obs.size() == views * n * obs_dim && states.size() == views * state_dim &&
         avail.size() == views * n * n_actions &&
         actions.size() == static_cast<std::size_t>(length) * n &&
         rewards.size() == static_cast<std::size_t>(length) && length > 0;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("ReplayBuffer: capacity 0");
}

void ReplayBuffer::insert(EpisodeRecord episode) {
  if (!episode.complete())
    throw std::invalid_argument("ReplayBuffer: episode is incomplete");
  if (episodes_.size() == capacity_) episodes_.pop_front();
  episodes_.push_back(std::move(episode));
  ++insertions_;
}

std::vector<const EpisodeRecord*> ReplayBuffer::sample(std::size_t batch,
                                                       Rng& rng) const {
  if (!can_sample(batch))
    throw std::invalid_argument("ReplayBuffer: not enough episodes to sample");
  std::vector<std::size_t> idx(episodes_.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::vector<const EpisodeRecord*> out;
  out.reserve(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const std::size_t j = i + rng.below(idx.size() - i);
    std::swap(idx[i], idx[j]);
    out.push_back(&episodes_[idx[i]]);
  }
  return out;
}

}  // namespace marl::qmix
