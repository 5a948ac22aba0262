#pragma once

#include <map>
#include <string>
#include <vector>

#include "marl/diffnet/tensor.hpp"

namespace marl::diffnet {

enum class OptimizerKind { kSgd, kRmsProp, kAdam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_kind_from_string(const std::string& s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgd;
  double lr = 5e-4;
  double clip_norm = 10.0;  // global L2 norm; <= 0 disables clipping
  double rms_alpha = 0.99;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double eps = 1e-5;
};

// One parameter group taking part in a joint update; all groups of one step
// share the clipping norm.
struct ParamGroup {
  std::string name;
  ParamSet* params;
  const ParamSet* grads;
};

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig config) : config_(config) {}

  // Applies one update. Throws NumericError (and leaves params untouched) if
  // any gradient is non-finite. Returns the pre-clipping gradient norm.
  double step(const std::vector<ParamGroup>& groups);

  const OptimizerConfig& config() const { return config_; }
  long long steps() const { return t_; }

 private:
  OptimizerConfig config_;
  long long t_ = 0;
  std::map<std::string, std::vector<double>> m_;
  std::map<std::string, std::vector<double>> v_;
};

// Stateless single-group update; only meaningful for kSgd.
ParamSet optimizer_step(ParamSet params, const ParamSet& grads,
                        const OptimizerConfig& config);

enum class SyncMode { kHard, kSoft };

// Hard: target = online. Soft: target = rate * online + (1 - rate) * target.
// Throws DimensionError if the layouts differ.
void target_sync(const ParamSet& online, ParamSet& target, SyncMode mode,
                 double rate = 1.0);

}  // namespace marl::diffnet
