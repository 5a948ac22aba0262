#pragma once

#include <cstdint>
#include <span>

#include "marl/diffnet/tensor.hpp"

namespace marl::diffnet {

// Monotonic mixer conditioned on the global state s:
//   W1 = |Hw1 s + bw1|  (n_agents x embed),  b1 = Hb1 s + bb1
//   hid = elu(W1^T q + b1)
//   w2 = |Hw2 s + bw2|,  V = v2 . relu(V1 s + bv1) + bv2
//   q_total = w2 . hid + V
// Absolute values keep every dq_total/dq_i >= 0.
struct MixingNetConfig {
  int n_agents = 0;
  int state_dim = 0;
  int embed_dim = 0;
  bool operator==(const MixingNetConfig&) const = default;
};

struct MixingNet {
  MixingNetConfig config;
  ParamSet params;

  static MixingNet create(const MixingNetConfig& config, std::uint64_t seed);
  static MixingNet zeros(const MixingNetConfig& config);
};

struct MixingCache {
  MixingNetConfig config;
  Matrix qs;       // n_agents x B
  Matrix state;    // state_dim x B
  Matrix w1_raw;   // (n_agents * embed) x B, agent-major
  Matrix hid_pre;  // embed x B
  Matrix hid;      // embed x B
  Matrix w2_raw;   // embed x B
  Matrix v_hid;    // embed x B (post relu)
};

struct MixingOutput {
  Eigen::RowVectorXd q_total;  // 1 x B
  MixingCache cache;
};

MixingOutput mixing_forward(const MixingNet& mix, const Matrix& chosen_qs,
                            const Matrix& state);

// Accumulates gradients of sum(dq_total .* q_total). Null outputs skipped.
void mixing_backward(const MixingNet& mix, const MixingCache& cache,
                     const Eigen::RowVectorXd& dq_total, ParamSet* grads,
                     Matrix* d_qs, Matrix* d_state);

// Single-sample helper.
double mixing_value(const MixingNet& mix, std::span<const double> chosen_qs,
                    std::span<const double> state);

}  // namespace marl::diffnet
