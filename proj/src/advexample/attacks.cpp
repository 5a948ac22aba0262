#include "marl/advexample/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace marl::advexample {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

double clip_box(double v) { return std::clamp(v, kFeatureLo, kFeatureHi); }

void check_target(const AgentNet& net, const std::vector<bool>& mask, int target,
                  const char* who) {
  if (static_cast<int>(mask.size()) != net.config.n_actions)
    throw std::invalid_argument(std::string(who) + ": mask length mismatch");
  if (target < 0 || target >= net.config.n_actions || !mask[target])
    throw std::invalid_argument(std::string(who) + ": target not available");
}

AttackResult finish(std::span<const double> clean, std::vector<double> x,
                    bool success, int iterations) {
  AttackResult r;
  for (std::size_t f = 0; f < x.size(); ++f) {
    const double d = std::abs(x[f] - clean[f]);
    r.l1_norm += d;
    r.linf_norm = std::max(r.linf_norm, d);
  }
  r.perturbed_obs = std::move(x);
  r.success = success;
  r.iterations_used = iterations;
  return r;
}

// Strictly positive schedule entries in (0, 1], strictly ascending.
void check_schedule(const std::vector<double>& s) {
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (!(s[k] > 0.0 && s[k] <= 1.0))
      throw std::invalid_argument("theta_schedule entries must lie in (0, 1]");
    if (k > 0 && !(s[k] > s[k - 1]))
      throw std::invalid_argument("theta_schedule must be strictly ascending");
  }
}

}  // namespace

void AttackBudget::validate() const {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
  if (fgsm_iters < 1) throw std::invalid_argument("fgsm_iters must be >= 1");
  if (max_iters_per_theta < 1)
    throw std::invalid_argument("max_iters_per_theta must be >= 1");
  check_schedule(theta_schedule);
}

void to_json(nlohmann::json& j, const AttackBudget& b) {
  j = {{"epsilon", b.epsilon},
       {"alpha", b.alpha},
       {"fgsm_iters", b.fgsm_iters},
       {"theta_schedule", b.theta_schedule},
       {"max_iters_per_theta", b.max_iters_per_theta}};
}

void from_json(const nlohmann::json& j, AttackBudget& b) {
  static const std::set<std::string> known = {
      "epsilon", "alpha", "fgsm_iters", "theta_schedule", "max_iters_per_theta"};
  for (const auto& [k, _] : j.items())
    if (!known.contains(k)) throw std::invalid_argument("unknown budget key: " + k);
  if (j.contains("epsilon")) b.epsilon = j.at("epsilon").get<double>();
  if (j.contains("alpha")) b.alpha = j.at("alpha").get<double>();
  if (j.contains("fgsm_iters")) b.fgsm_iters = j.at("fgsm_iters").get<int>();
  if (j.contains("theta_schedule"))
    b.theta_schedule = j.at("theta_schedule").get<std::vector<double>>();
  if (j.contains("max_iters_per_theta"))
    b.max_iters_per_theta = j.at("max_iters_per_theta").get<int>();
}

int victim_action(const AgentNet& net, std::span<const double> obs,
                  std::span<const double> hidden, const std::vector<bool>& mask) {
  const Vector q = diffnet::q_values(net, obs, hidden);
  if (static_cast<int>(mask.size()) != q.size())
    throw std::invalid_argument("victim_action: mask length mismatch");
  int best = -1;
  for (int a = 0; a < q.size(); ++a) {
    if (!mask[a]) continue;
    if (best < 0 || q(a) > q(best)) best = a;
  }
  if (best < 0) throw std::invalid_argument("victim_action: empty mask");
  return best;
}

AttackResult fgsm_untargeted(const AgentNet& net, std::span<const double> obs,
                             std::span<const double> hidden,
                             const std::vector<bool>& mask, double epsilon) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("fgsm: epsilon must be >= 0");
  const int clean = victim_action(net, obs, hidden, mask);
  std::vector<double> x(obs.begin(), obs.end());
  if (epsilon > 0.0) {
    const Vector g = diffnet::action_input_gradient(net, obs, hidden, clean);
    for (std::size_t f = 0; f < x.size(); ++f)
      x[f] = clip_box(x[f] - epsilon * sign(g(f)));
  }
  const bool changed = victim_action(net, x, hidden, mask) != clean;
  return finish(obs, std::move(x), changed, 1);
}

AttackResult it_fgsm(const AgentNet& net, std::span<const double> obs,
                     std::span<const double> hidden, const std::vector<bool>& mask,
                     int target, const AttackBudget& budget) {
  check_target(net, mask, target, "it_fgsm");
  if (!(budget.epsilon >= 0.0) || !(budget.alpha > 0.0) || budget.fgsm_iters < 1)
    throw std::invalid_argument("it_fgsm: bad budget");
  std::vector<double> x(obs.begin(), obs.end());
  for (int k = 0;; ++k) {
    if (victim_action(net, x, hidden, mask) == target)
      return finish(obs, std::move(x), true, k);
    if (k == budget.fgsm_iters) return finish(obs, std::move(x), false, k);
    const Vector g = diffnet::action_input_gradient(net, x, hidden, target);
    for (std::size_t f = 0; f < x.size(); ++f) {
      const double stepped = x[f] + budget.alpha * sign(g(f));
      const double ball =
          std::clamp(stepped, obs[f] - budget.epsilon, obs[f] + budget.epsilon);
      x[f] = clip_box(ball);
    }
  }
}

SaliencyEntry pair_saliency(int i, int j, double gt, double gn) {
  SaliencyEntry e;
  e.i = i;
  e.j = j;
  const double prod = gt * gn;
  e.score = prod > 0.0 ? 0.0 : -prod;
  e.direction = static_cast<int>(sign(gt));
  return e;
}

namespace {

struct PairGradients {
  std::vector<double> gt;  // dQ_t/dx_f
  std::vector<double> gn;  // sum over k != t of dQ_k/dx_f
};

PairGradients split_jacobian(const diffnet::RowMatrix& jac, int target) {
  if (target < 0 || target >= jac.rows())
    throw std::invalid_argument("saliency: target out of range");
  PairGradients p;
  const auto n = static_cast<std::size_t>(jac.cols());
  p.gt.resize(n);
  p.gn.assign(n, 0.0);
  for (std::size_t f = 0; f < n; ++f) {
    p.gt[f] = jac(target, f);
    for (int k = 0; k < jac.rows(); ++k)
      if (k != target) p.gn[f] += jac(k, f);
  }
  return p;
}

bool saturated(double x, int direction) {
  return (direction > 0 && x >= kFeatureHi) || (direction < 0 && x <= kFeatureLo);
}

}  // namespace

std::vector<SaliencyEntry> saliency_from_jacobian(const diffnet::RowMatrix& jacobian,
                                                  int target) {
  const PairGradients p = split_jacobian(jacobian, target);
  const int n = static_cast<int>(p.gt.size());
  std::vector<SaliencyEntry> out;
  out.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      out.push_back(pair_saliency(i, j, p.gt[i] + p.gt[j], p.gn[i] + p.gn[j]));
  return out;
}

std::vector<SaliencyEntry> saliency_map_2f(const AgentNet& net,
                                           std::span<const double> obs,
                                           std::span<const double> hidden,
                                           int target) {
  return saliency_from_jacobian(diffnet::input_jacobian(net, obs, hidden), target);
}

AttackResult jsma_2f(const AgentNet& net, std::span<const double> obs,
                     std::span<const double> hidden, const std::vector<bool>& mask,
                     int target, double theta, int max_iters) {
  check_target(net, mask, target, "jsma_2f");
  if (!(theta > 0.0 && theta <= 1.0))
    throw std::invalid_argument("jsma_2f: theta must lie in (0, 1]");
  if (max_iters < 0) throw std::invalid_argument("jsma_2f: max_iters < 0");
  std::vector<double> x(obs.begin(), obs.end());
  const int n = static_cast<int>(x.size());
  for (int k = 0;; ++k) {
    if (victim_action(net, x, hidden, mask) == target) {
      AttackResult r = finish(obs, std::move(x), true, k);
      r.theta_used = theta;
      return r;
    }
    if (k == max_iters) {
      AttackResult r = finish(obs, std::move(x), false, k);
      r.theta_used = theta;
      r.diagnostic = "iteration limit";
      return r;
    }
    const PairGradients p =
        split_jacobian(diffnet::input_jacobian(net, x, hidden), target);
    SaliencyEntry best;
    bool found = false;
    bool any_positive = false;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        const SaliencyEntry e =
            pair_saliency(i, j, p.gt[i] + p.gt[j], p.gn[i] + p.gn[j]);
        if (!(e.score > 0.0)) continue;
        any_positive = true;
        if (saturated(x[i], e.direction) || saturated(x[j], e.direction)) continue;
        if (!found || e.score > best.score) {
          best = e;
          found = true;
        }
      }
    if (!found) {
      AttackResult r = finish(obs, std::move(x), false, k);
      r.theta_used = theta;
      r.diagnostic = any_positive ? "all salient pairs saturated"
                                  : "saliency map is all zero";
      return r;
    }
    x[best.i] = clip_box(x[best.i] + best.direction * theta);
    x[best.j] = clip_box(x[best.j] + best.direction * theta);
  }
}

AttackResult d_jsma(const AgentNet& net, std::span<const double> obs,
                    std::span<const double> hidden, const std::vector<bool>& mask,
                    int target, const AttackBudget& budget) {
  if (budget.theta_schedule.empty())
    throw std::invalid_argument("d_jsma: empty theta schedule");
  check_schedule(budget.theta_schedule);
  AttackResult last;
  for (double theta : budget.theta_schedule) {
    last = jsma_2f(net, obs, hidden, mask, target, theta, budget.max_iters_per_theta);
    if (last.success) return last;
  }
  return last;
}

}  // namespace marl::advexample
