#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "marl/diffnet/agent_net.hpp"

namespace marl::advexample {

using diffnet::AgentNet;
using diffnet::Vector;

// Observation features live in [-1, 1]; every attack clips to that box.
inline constexpr double kFeatureLo = -1.0;
inline constexpr double kFeatureHi = 1.0;

struct AttackBudget {
  double epsilon = 0.5;  // L-inf cap for the FGSM family
  double alpha = 0.05;   // it-FGSM step
  int fgsm_iters = 20;   // it-FGSM iteration cap
  std::vector<double> theta_schedule{0.1, 0.3, 0.5, 0.7, 0.9};
  int max_iters_per_theta = 20;

  void validate() const;
};

void to_json(nlohmann::json& j, const AttackBudget& b);
void from_json(const nlohmann::json& j, AttackBudget& b);

struct AttackResult {
  std::vector<double> perturbed_obs;
  bool success = false;  // targeted: masked argmax == target; FGSM: changed
  int iterations_used = 0;
  double l1_norm = 0.0;
  double linf_norm = 0.0;
  double theta_used = 0.0;
  std::string diagnostic;  // set when an attack gives up early
};

// Masked argmax of the victim on `obs` with the given hidden state.
int victim_action(const AgentNet& net, std::span<const double> obs,
                  std::span<const double> hidden, const std::vector<bool>& mask);

// One signed step down the clean greedy action's Q.
AttackResult fgsm_untargeted(const AgentNet& net, std::span<const double> obs,
                             std::span<const double> hidden,
                             const std::vector<bool>& mask, double epsilon);

// Iterated signed ascent on Q_target, projected onto the epsilon ball and
// the feature box; stops at the first success.
AttackResult it_fgsm(const AgentNet& net, std::span<const double> obs,
                     std::span<const double> hidden, const std::vector<bool>& mask,
                     int target, const AttackBudget& budget);

struct SaliencyEntry {
  int i = 0;
  int j = 0;
  double score = 0.0;
  int direction = 0;  // +1 or -1 (0 only when the target gradient sum is 0)
};

// Scores a pair from summed target / non-target gradients:
//   score = 0 if gt * gn > 0, else -gt * gn;  direction = sign(gt)
SaliencyEntry pair_saliency(int i, int j, double gt, double gn);

// Every unordered pair i < j, lexicographic order. jacobian row k = dQ_k/dx.
std::vector<SaliencyEntry> saliency_from_jacobian(const diffnet::RowMatrix& jacobian,
                                                  int target);
std::vector<SaliencyEntry> saliency_map_2f(const AgentNet& net,
                                           std::span<const double> obs,
                                           std::span<const double> hidden,
                                           int target);

// Two-feature saliency attack with a fixed step theta.
AttackResult jsma_2f(const AgentNet& net, std::span<const double> obs,
                     std::span<const double> hidden, const std::vector<bool>& mask,
                     int target, double theta, int max_iters);

// jsma_2f over the ascending schedule, each try from the clean observation.
AttackResult d_jsma(const AgentNet& net, std::span<const double> obs,
                    std::span<const double> hidden, const std::vector<bool>& mask,
                    int target, const AttackBudget& budget);

}  // namespace marl::advexample
