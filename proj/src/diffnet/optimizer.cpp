#include "marl/diffnet/optimizer.hpp"

#include <cmath>

namespace marl::diffnet {

std::string to_string(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kSgd:
      return "sgd";
    case OptimizerKind::kRmsProp:
      return "rmsprop";
    case OptimizerKind::kAdam:
      return "adam";
  }
  return "unknown";
}

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "rmsprop") return OptimizerKind::kRmsProp;
  if (s == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer: " + s);
}

double Optimizer::step(const std::vector<ParamGroup>& groups) {
  double sq = 0.0;
  for (const auto& g : groups) {
    if (!same_layout(*g.params, *g.grads))
      throw DimensionError("optimizer: gradients do not match group " + g.name);
    for (const auto& [name, t] : *g.grads)
      if (!t.all_finite())
        throw NumericError(g.name + "/" + name, "optimizer step refused");
    sq += squared_norm(*g.grads);
  }
  const double norm = std::sqrt(sq);
  double scale = 1.0;
  if (config_.clip_norm > 0.0 && norm > config_.clip_norm)
    scale = config_.clip_norm / norm;

  ++t_;
  const double lr = config_.lr;
  for (const auto& g : groups) {
    for (auto& [name, p] : *g.params) {
      const Tensor& gr = g.grads->at(name);
      const std::size_t n = p.size();
      switch (config_.kind) {
        case OptimizerKind::kSgd:
          for (std::size_t i = 0; i < n; ++i)
            p.data[i] -= lr * scale * gr.data[i];
          break;
        case OptimizerKind::kRmsProp: {
          auto& v = v_[g.name + "/" + name];
          if (v.empty()) v.assign(n, 0.0);
          const double a = config_.rms_alpha;
          for (std::size_t i = 0; i < n; ++i) {
            const double d = scale * gr.data[i];
            v[i] = a * v[i] + (1.0 - a) * d * d;
            p.data[i] -= lr * d / (std::sqrt(v[i]) + config_.eps);
          }
          break;
        }
        case OptimizerKind::kAdam: {
          auto& m = m_[g.name + "/" + name];
          auto& v = v_[g.name + "/" + name];
          if (m.empty()) m.assign(n, 0.0);
          if (v.empty()) v.assign(n, 0.0);
          const double b1 = config_.adam_beta1;
          const double b2 = config_.adam_beta2;
          const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
          const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
          for (std::size_t i = 0; i < n; ++i) {
            const double d = scale * gr.data[i];
            m[i] = b1 * m[i] + (1.0 - b1) * d;
            v[i] = b2 * v[i] + (1.0 - b2) * d * d;
            p.data[i] -=
                lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.eps);
          }
          break;
        }
      }
    }
  }
  return norm;
}

ParamSet optimizer_step(ParamSet params, const ParamSet& grads,
                        const OptimizerConfig& config) {
  Optimizer opt(config);
  opt.step({{"params", &params, &grads}});
  return params;
}

void target_sync(const ParamSet& online, ParamSet& target, SyncMode mode,
                 double rate) {
  if (!same_layout(online, target))
    throw DimensionError("target_sync: architectures differ");
  if (mode == SyncMode::kHard) {
    target = online;
    return;
  }
  if (rate < 0.0 || rate > 1.0)
    throw std::invalid_argument("target_sync: rate must be in [0, 1]");
  if (rate == 0.0) return;
  if (rate == 1.0) {
    target = online;
    return;
  }
  for (auto& [name, t] : target) {
    const Tensor& o = online.at(name);
    for (std::size_t i = 0; i < t.size(); ++i)
      t.data[i] = rate * o.data[i] + (1.0 - rate) * t.data[i];
  }
}

}  // namespace marl::diffnet
