#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include "marl/common/rng.hpp"

namespace marl::qmix {

// One complete episode. Per-step arrays hold length + 1 entries for
// observations, states and masks (the final post-step view is kept for
// bootstrapping) and `length` entries for actions and rewards.
struct EpisodeRecord {
  int n_agents = 0;
  int obs_dim = 0;
  int state_dim = 0;
  int n_actions = 0;
  int length = 0;
  std::vector<double> obs;      // (length+1) * n_agents * obs_dim
  std::vector<double> states;   // (length+1) * state_dim
  std::vector<char> avail;      // (length+1) * n_agents * n_actions
  std::vector<int> actions;     // length * n_agents
  std::vector<double> rewards;  // length
  // True if the episode ended by a real terminal event (win or wipe); a
  // timeout leaves it false so the last step still bootstraps.
  bool terminated = false;
  bool won = false;

  EpisodeRecord() = default;
  EpisodeRecord(int n_agents, int obs_dim, int state_dim, int n_actions);

  const double* obs_at(int t, int agent) const {
    return obs.data() + (static_cast<std::size_t>(t) * n_agents + agent) * obs_dim;
  }
  const double* state_at(int t) const {
    return states.data() + static_cast<std::size_t>(t) * state_dim;
  }
  bool avail_at(int t, int agent, int action) const {
    return avail[(static_cast<std::size_t>(t) * n_agents + agent) * n_actions +
                 action] != 0;
  }
  int action_at(int t, int agent) const {
    return actions[static_cast<std::size_t>(t) * n_agents + agent];
  }

  // Appends the view at the current timestep (observations, masks, state).
  void push_view(const std::vector<std::vector<double>>& agent_obs,
                 const std::vector<std::vector<bool>>& masks,
                 const std::vector<double>& state);
  void push_transition(const std::vector<int>& joint_action, double reward);
  // Every array has the size implied by `length`.
  bool complete() const;

  bool operator==(const EpisodeRecord&) const = default;
};

// FIFO ring of complete episodes.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void insert(EpisodeRecord episode);
  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t insertions() const { return insertions_; }
  bool can_sample(std::size_t batch) const { return episodes_.size() >= batch; }

  // Distinct episodes drawn uniformly (partial Fisher-Yates).
  std::vector<const EpisodeRecord*> sample(std::size_t batch, Rng& rng) const;
  const EpisodeRecord& at(std::size_t i) const { return episodes_.at(i); }

 private:
  std::size_t capacity_;
  std::size_t insertions_ = 0;
  std::deque<EpisodeRecord> episodes_;
};

}  // namespace marl::qmix
