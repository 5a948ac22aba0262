#pragma once

#include <span>
#include <vector>

#include "marl/qmix/replay_buffer.hpp"
#include "marl/qmix/team.hpp"

namespace marl::qmix {

// Sampled episodes padded to the longest one; steps t >= length are padding.
struct EpisodeBatch {
  std::vector<const EpisodeRecord*> episodes;

  explicit EpisodeBatch(std::vector<const EpisodeRecord*> eps);
  int size() const { return static_cast<int>(episodes.size()); }
  int max_length() const { return max_length_; }
  bool valid(int b, int t) const { return t < episodes[b]->length; }

 private:
  int max_length_ = 0;
};

struct TeamGrads {
  std::vector<diffnet::ParamSet> nets;
  diffnet::ParamSet mixer;
};

struct TdLoss {
  double loss = 0.0;
  int valid_steps = 0;
  TeamGrads grads;
};

// Mean squared TD error over non-padded steps with
//   y_t = r_t + gamma * (1 - terminal_t) * Q_tot^target(max_a Q_i^target(t+1), s_{t+1})
// Gradients flow through the online mixer into the online agent networks
// (back-propagated through time); the target side is constant.
TdLoss qmix_td_loss(const EpisodeBatch& batch, const TeamModel& online,
                    const TeamModel& target, double gamma);

struct DqnTdLoss {
  double loss = 0.0;
  int valid_steps = 0;
  diffnet::ParamSet grads;
};

// Single-agent recurrent DQN loss on single-agent episode records.
DqnTdLoss recurrent_dqn_td_loss(const EpisodeBatch& batch,
                                const AgentNet& online, const AgentNet& target,
                                double gamma);

}  // namespace marl::qmix
