#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marl/common/rng.hpp"
#include "marl/diffnet/agent_net.hpp"
#include "marl/diffnet/mixing_net.hpp"
#include "marl/qmix/rollout.hpp"

namespace marl::advpolicy {

using diffnet::AgentNet;
using diffnet::MixingNet;
using diffnet::Vector;

// Target-action selectors. All break ties toward the lowest action index and
// never return a masked-out action.
int select_random(const std::vector<bool>& mask, Rng& rng);
int select_local_worst(std::span<const double> victim_q,
                       const std::vector<bool>& mask);
// Substitutes each available victim action's Q into slot `victim` of
// all_chosen_qs and keeps the action with the lowest mixed Q_total.
int select_qmix_worst(std::span<const double> all_chosen_qs, int victim,
                      std::span<const double> victim_per_action_qs,
                      std::span<const double> state, const MixingNet& mix,
                      const std::vector<bool>& mask);

enum class AdvVariant { kRandom, kLocalWorst, kQmixWorst, kOw, kOwr };
std::string to_string(AdvVariant v);
AdvVariant adv_variant_from_string(const std::string& s);  // random|lw|qmix-worst|ow|owr

struct AdvPolicy {
  AdvVariant variant = AdvVariant::kRandom;
  int victim = 0;
  std::optional<AgentNet> net;  // OW / OWR only
  double lambda = 0.0;          // OWR shaping weight the net was trained with
};

// Stateful per-episode view of a policy. select() is called at every step of
// the episode, including steps where the victim is dead (the result is then
// ignored) so recurrent selectors keep an aligned hidden state.
class TargetSelector {
 public:
  virtual ~TargetSelector() = default;
  virtual void begin_episode(std::uint64_t /*seed*/) {}
  virtual int select(const qmix::VictimView& view) = 0;
};

class RandomSelector : public TargetSelector {
 public:
  void begin_episode(std::uint64_t seed) override { rng_ = Rng(seed); }
  int select(const qmix::VictimView& view) override;

 private:
  Rng rng_{0};
};

class LocalWorstSelector : public TargetSelector {
 public:
  int select(const qmix::VictimView& view) override;
};

class QmixWorstSelector : public TargetSelector {
 public:
  int select(const qmix::VictimView& view) override;
};

// The victim's own greedy action; overriding with it is the identity.
class GreedySelector : public TargetSelector {
 public:
  int select(const qmix::VictimView& view) override { return view.clean_action; }
};

// Greedy adversarial Q-network run on the victim's clean observation stream.
class NetworkSelector : public TargetSelector {
 public:
  explicit NetworkSelector(AgentNet net) : net_(std::move(net)) {}
  void begin_episode(std::uint64_t seed) override;
  int select(const qmix::VictimView& view) override;

 private:
  AgentNet net_;
  Vector hidden_;
};

std::unique_ptr<TargetSelector> make_selector(const AdvPolicy& policy);

// Direct control: the victim's action is replaced by the selector's output.
class DirectControlHook : public qmix::VictimHook {
 public:
  DirectControlHook(int victim, TargetSelector& selector)
      : victim_(victim), selector_(selector) {}
  int victim() const override { return victim_; }
  void begin_episode(int episode, std::uint64_t seed,
                     const env::Snapshot& start) override;
  qmix::HookDecision decide(const qmix::VictimView& view) override;

 private:
  int victim_;
  TargetSelector& selector_;
};

}  // namespace marl::advpolicy
