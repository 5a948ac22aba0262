#include "marl/advpolicy/selectors.hpp"

#include <stdexcept>

#include "marl/qmix/team.hpp"

namespace marl::advpolicy {

namespace {

void check_mask(std::size_t n, const std::vector<bool>& mask, const char* who) {
  if (n != mask.size())
    throw std::invalid_argument(std::string(who) + ": length mismatch");
  for (bool b : mask)
    if (b) return;
  throw std::invalid_argument(std::string(who) + ": no available action");
}

}  // namespace

int select_random(const std::vector<bool>& mask, Rng& rng) {
  return rng.pick_available(mask);
}

int select_local_worst(std::span<const double> victim_q,
                       const std::vector<bool>& mask) {
  check_mask(victim_q.size(), mask, "select_local_worst");
  int best = -1;
  for (std::size_t a = 0; a < victim_q.size(); ++a) {
    if (!mask[a]) continue;
    if (best < 0 || victim_q[a] < victim_q[best]) best = static_cast<int>(a);
  }
  return best;
}

int select_qmix_worst(std::span<const double> all_chosen_qs, int victim,
                      std::span<const double> victim_per_action_qs,
                      std::span<const double> state, const MixingNet& mix,
                      const std::vector<bool>& mask) {
  check_mask(victim_per_action_qs.size(), mask, "select_qmix_worst");
  const int n = static_cast<int>(all_chosen_qs.size());
  if (n != mix.config.n_agents || victim < 0 || victim >= n ||
      static_cast<int>(state.size()) != mix.config.state_dim)
    throw std::invalid_argument("select_qmix_worst: inconsistent dimensions");

  // One batched mixer pass, one column per available action.
  std::vector<int> candidates;
  for (std::size_t a = 0; a < mask.size(); ++a)
    if (mask[a]) candidates.push_back(static_cast<int>(a));
  const int m = static_cast<int>(candidates.size());
  diffnet::Matrix qs(n, m), st(state.size(), m);
  for (int c = 0; c < m; ++c) {
    for (int i = 0; i < n; ++i) qs(i, c) = all_chosen_qs[i];
    qs(victim, c) = victim_per_action_qs[candidates[c]];
    for (std::size_t k = 0; k < state.size(); ++k) st(k, c) = state[k];
  }
  const Eigen::RowVectorXd q_total = diffnet::mixing_forward(mix, qs, st).q_total;
  int best = 0;
  for (int c = 1; c < m; ++c)
    if (q_total(c) < q_total(best)) best = c;
  return candidates[best];
}

std::string to_string(AdvVariant v) {
  switch (v) {
    case AdvVariant::kRandom: return "random";
    case AdvVariant::kLocalWorst: return "lw";
    case AdvVariant::kQmixWorst: return "qmix-worst";
    case AdvVariant::kOw: return "ow";
    case AdvVariant::kOwr: return "owr";
  }
  return "?";
}

AdvVariant adv_variant_from_string(const std::string& s) {
  for (AdvVariant v : {AdvVariant::kRandom, AdvVariant::kLocalWorst,
                       AdvVariant::kQmixWorst, AdvVariant::kOw, AdvVariant::kOwr})
    if (to_string(v) == s) return v;
  throw std::invalid_argument("unknown target policy: " + s);
}

int RandomSelector::select(const qmix::VictimView& view) {
  return select_random(view.clean_obs->available, rng_);
}

int LocalWorstSelector::select(const qmix::VictimView& view) {
  const Vector& q = *view.victim_q;
  return select_local_worst(std::span<const double>(q.data(), q.size()),
                            view.clean_obs->available);
}

int QmixWorstSelector::select(const qmix::VictimView& view) {
  const Vector& q = *view.victim_q;
  return select_qmix_worst(view.chosen_qs, view.victim,
                           std::span<const double>(q.data(), q.size()),
                           *view.global_state, view.team->mixer,
                           view.clean_obs->available);
}

void NetworkSelector::begin_episode(std::uint64_t) {
  hidden_ = Vector::Zero(net_.config.state_rows());
}

int NetworkSelector::select(const qmix::VictimView& view) {
  Vector h_new;
  const Vector q = diffnet::q_values(
      net_, view.clean_obs->features,
      std::span<const double>(hidden_.data(), hidden_.size()), &h_new);
  if (net_.config.recurrent()) hidden_ = std::move(h_new);
  return qmix::masked_argmax(q, view.clean_obs->available);
}

std::unique_ptr<TargetSelector> make_selector(const AdvPolicy& policy) {
  switch (policy.variant) {
    case AdvVariant::kRandom: return std::make_unique<RandomSelector>();
    case AdvVariant::kLocalWorst: return std::make_unique<LocalWorstSelector>();
    case AdvVariant::kQmixWorst: return std::make_unique<QmixWorstSelector>();
    case AdvVariant::kOw:
    case AdvVariant::kOwr:
      if (!policy.net)
        throw std::invalid_argument("adversarial policy has no network");
      return std::make_unique<NetworkSelector>(*policy.net);
  }
  throw std::invalid_argument("make_selector: bad variant");
}

void DirectControlHook::begin_episode(int, std::uint64_t seed,
                                      const env::Snapshot&) {
  selector_.begin_episode(seed);
}

qmix::HookDecision DirectControlHook::decide(const qmix::VictimView& view) {
  const int a = selector_.select(view);
  qmix::HookDecision d;
  if (!view.victim_alive) return d;
  d.kind = qmix::HookDecision::Kind::kOverride;
  d.target = a;
  return d;
}

}  // namespace marl::advpolicy
