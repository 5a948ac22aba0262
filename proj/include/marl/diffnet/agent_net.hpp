#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "marl/diffnet/tensor.hpp"

namespace marl::diffnet {

// kLinear:    q = W x + b
// kMlp:       q = W2 relu(W1 x + b1) + b2
// kRecurrent: a = relu(W1 x + b1); h' = GRU(a, h); q = W2 h' + b2
// The GRU follows the usual reset/update gate formulation:
//   r = sig(Wir a + bir + Whr h + bhr), z = sig(Wiz a + biz + Whz h + bhz)
//   n = tanh(Win a + bin + r * (Whn h + bhn)), h' = (1 - z) * n + z * h
enum class AgentArch { kLinear, kMlp, kRecurrent };

std::string to_string(AgentArch arch);
AgentArch agent_arch_from_string(const std::string& s);

struct AgentNetConfig {
  int input_dim = 0;
  int hidden_dim = 0;  // unused by kLinear
  int n_actions = 0;
  AgentArch arch = AgentArch::kRecurrent;

  bool recurrent() const { return arch == AgentArch::kRecurrent; }
  // Rows of the hidden state carried between steps (0 if not recurrent).
  int state_rows() const { return recurrent() ? hidden_dim : 0; }
  bool operator==(const AgentNetConfig&) const = default;
};

struct AgentNet {
  AgentNetConfig config;
  ParamSet params;

  // Uniform(-k, k), k = 1/sqrt(fan_in), for weights and biases.
  static AgentNet create(const AgentNetConfig& config, std::uint64_t seed);
  static AgentNet zeros(const AgentNetConfig& config);
};

// Activations of one batched forward step.
struct AgentCache {
  AgentNetConfig config;
  Matrix x;       // input_dim x B
  Matrix h_prev;  // hidden x B (recurrent only)
  Matrix a1;      // relu output (mlp / recurrent)
  Matrix gi;      // 3h x B input-side gate pre-activations
  Matrix gh;      // 3h x B hidden-side gate pre-activations
  Matrix r, z, n;
  Matrix h_new;
  Matrix q;
};

struct AgentOutput {
  Matrix q;      // n_actions x B
  Matrix h_new;  // hidden x B (empty if not recurrent)
  AgentCache cache;
};

// Batched forward. obs: input_dim x B; hidden: state_rows x B (ignored and
// may be empty for non-recurrent nets). Throws DimensionError / NumericError.
AgentOutput forward(const AgentNet& net, const Matrix& obs,
                    const Matrix& hidden);

// Accumulates parameter gradients of sum(dq .* q) + sum(dh_new .* h_new) into
// `grads` (if non-null) and optionally writes input / previous-hidden
// gradients. dh_new may be null (treated as zero).
void backward(const AgentNet& net, const AgentCache& cache, const Matrix& dq,
              const Matrix* dh_new, ParamSet* grads, Matrix* d_obs,
              Matrix* d_hidden);

struct AgentGrads {
  ParamSet param_grads;
  Matrix d_obs;
  Matrix d_hidden;
};
AgentGrads backward(const AgentNet& net, const AgentCache& cache,
                    const Matrix& dq, const Matrix* dh_new = nullptr);

// Single-observation convenience wrappers over Tensor.
struct AgentStep {
  Tensor q_values;
  Tensor new_hidden;
  AgentCache cache;
};
AgentStep agent_forward(const AgentNet& net, const Tensor& obs,
                        const Tensor& hidden);

Tensor initial_hidden(const AgentNet& net);

// d(selector . q)/d(obs) with the hidden state held constant.
Tensor input_gradient(const AgentNet& net, const Tensor& obs,
                      const Tensor& hidden, const Tensor& selector);

// dQ_action/d(obs) for one observation, hidden state held constant.
Vector action_input_gradient(const AgentNet& net, std::span<const double> obs,
                             std::span<const double> hidden, int action);

// Every action's input gradient at once: row k is dQ_k/d(obs).
RowMatrix input_jacobian(const AgentNet& net, std::span<const double> obs,
                         std::span<const double> hidden);

// Q-values for one observation (no cache retained).
Vector q_values(const AgentNet& net, std::span<const double> obs,
                std::span<const double> hidden, Vector* h_new = nullptr);

}  // namespace marl::diffnet
