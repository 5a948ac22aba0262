#include "marl/qmix/learner.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace marl::qmix {

namespace {

using diffnet::AgentCache;
using diffnet::ParamSet;
using Eigen::Index;

struct Unroll {
  std::vector<Matrix> q;  // per t: n_actions x (B * members)
  std::vector<AgentCache> caches;
};

// Runs `net` over views t = 0 .. steps-1 for the given agents of every
// episode. Column b * members.size() + j holds agent members[j] of episode b.
Unroll unroll(const AgentNet& net, const EpisodeBatch& batch,
              const std::vector<int>& members, int steps, bool keep_cache) {
  const Index m = static_cast<Index>(members.size());
  const Index cols = batch.size() * m;
  const int in = net.config.input_dim;
  Unroll u;
  u.q.reserve(steps);
  if (keep_cache) u.caches.reserve(steps);
  Matrix h = Matrix::Zero(net.config.state_rows(), cols);
  Matrix x(in, cols);
  for (int t = 0; t < steps; ++t) {
    for (int b = 0; b < batch.size(); ++b) {
      const EpisodeRecord& ep = *batch.episodes[b];
      for (Index j = 0; j < m; ++j) {
        const Index c = b * m + j;
        if (t <= ep.length)
          x.col(c) = Eigen::Map<const Vector>(ep.obs_at(t, members[j]), in);
        else
          x.col(c).setZero();
      }
    }
    diffnet::AgentOutput out = diffnet::forward(net, x, h);
    u.q.push_back(std::move(out.q));
    h = std::move(out.h_new);
    if (keep_cache) u.caches.push_back(std::move(out.cache));
  }
  return u;
}

double masked_max(const Matrix& q, Index col, const EpisodeRecord& ep, int t,
                  int agent) {
  double best = -std::numeric_limits<double>::infinity();
  for (Index a = 0; a < q.rows(); ++a)
    if (ep.avail_at(t, agent, static_cast<int>(a))) best = std::max(best, q(a, col));
  if (!std::isfinite(best))
    throw std::logic_error("masked_max: no available action in stored mask");
  return best;
}

bool terminal_at(const EpisodeRecord& ep, int t) {
  return ep.terminated && t == ep.length - 1;
}

}  // namespace

EpisodeBatch::EpisodeBatch(std::vector<const EpisodeRecord*> eps)
    : episodes(std::move(eps)) {
  if (episodes.empty()) throw std::invalid_argument("EpisodeBatch: empty");
  for (const EpisodeRecord* e : episodes) {
    if (!e || !e->complete())
      throw std::invalid_argument("EpisodeBatch: incomplete episode");
    max_length_ = std::max(max_length_, e->length);
  }
}

TdLoss qmix_td_loss(const EpisodeBatch& batch, const TeamModel& online,
                    const TeamModel& target, double gamma) {
  const int n_agents = online.n_agents();
  const int B = batch.size();
  const int T = batch.max_length();
  const int n_nets = static_cast<int>(online.nets.size());
  for (const EpisodeRecord* e : batch.episodes)
    if (e->n_agents != n_agents)
      throw std::invalid_argument("qmix_td_loss: agent count mismatch");

  std::vector<std::vector<int>> members(n_nets);
  std::vector<Unroll> on(n_nets), tg(n_nets);
  for (int k = 0; k < n_nets; ++k) {
    members[k] = online.agents_of(k);
    if (members[k].empty()) continue;
    on[k] = unroll(online.nets[k], batch, members[k], T, true);
    tg[k] = unroll(target.nets[k], batch, members[k], T + 1, false);
  }

  // Column t * B + b of the mixer batch is (episode b, step t).
  const Index cols = static_cast<Index>(T) * B;
  const int sdim = online.mixer.config.state_dim;
  Matrix chosen = Matrix::Zero(n_agents, cols);
  Matrix next_max = Matrix::Zero(n_agents, cols);
  Matrix states = Matrix::Zero(sdim, cols);
  Matrix next_states = Matrix::Zero(sdim, cols);
  for (int k = 0; k < n_nets; ++k) {
    const Index m = static_cast<Index>(members[k].size());
    for (int t = 0; t < T; ++t)
      for (int b = 0; b < B; ++b) {
        const EpisodeRecord& ep = *batch.episodes[b];
        if (!batch.valid(b, t)) continue;
        for (Index j = 0; j < m; ++j) {
          const int i = members[k][j];
          const Index c = b * m + j;
          chosen(i, t * B + b) = on[k].q[t](ep.action_at(t, i), c);
          next_max(i, t * B + b) = masked_max(tg[k].q[t + 1], c, ep, t + 1, i);
        }
      }
  }
  for (int t = 0; t < T; ++t)
    for (int b = 0; b < B; ++b) {
      if (!batch.valid(b, t)) continue;
      const EpisodeRecord& ep = *batch.episodes[b];
      states.col(t * B + b) = Eigen::Map<const Vector>(ep.state_at(t), sdim);
      next_states.col(t * B + b) =
          Eigen::Map<const Vector>(ep.state_at(t + 1), sdim);
    }

  diffnet::MixingOutput q_tot = diffnet::mixing_forward(online.mixer, chosen, states);
  diffnet::MixingOutput q_next =
      diffnet::mixing_forward(target.mixer, next_max, next_states);

  TdLoss res;
  Eigen::RowVectorXd td = Eigen::RowVectorXd::Zero(cols);
  for (int t = 0; t < T; ++t)
    for (int b = 0; b < B; ++b) {
      if (!batch.valid(b, t)) continue;
      const EpisodeRecord& ep = *batch.episodes[b];
      const Index c = t * B + b;
      const double boot = terminal_at(ep, t) ? 0.0 : gamma * q_next.q_total(c);
      td(c) = q_tot.q_total(c) - (ep.rewards[t] + boot);
      ++res.valid_steps;
    }
  res.loss = td.squaredNorm() / res.valid_steps;
  if (!std::isfinite(res.loss))
    throw diffnet::NumericError("qmix_td_loss", "non-finite loss");

  const Eigen::RowVectorXd dq_tot = td * (2.0 / res.valid_steps);
  res.grads.mixer = diffnet::zeros_like(online.mixer.params);
  Matrix d_chosen;
  diffnet::mixing_backward(online.mixer, q_tot.cache, dq_tot, &res.grads.mixer,
                           &d_chosen, nullptr);

  res.grads.nets.resize(n_nets);
  for (int k = 0; k < n_nets; ++k) {
    const AgentNet& net = online.nets[k];
    res.grads.nets[k] = diffnet::zeros_like(net.params);
    if (members[k].empty()) continue;
    const Index m = static_cast<Index>(members[k].size());
    const Index ncols = B * m;
    Matrix dh = Matrix::Zero(net.config.state_rows(), ncols);
    Matrix dh_prev;
    for (int t = T - 1; t >= 0; --t) {
      Matrix dq = Matrix::Zero(net.config.n_actions, ncols);
      for (int b = 0; b < B; ++b) {
        if (!batch.valid(b, t)) continue;
        const EpisodeRecord& ep = *batch.episodes[b];
        for (Index j = 0; j < m; ++j) {
          const int i = members[k][j];
          dq(ep.action_at(t, i), b * m + j) = d_chosen(i, t * B + b);
        }
      }
      diffnet::backward(net, on[k].caches[t], dq,
                        net.config.recurrent() ? &dh : nullptr,
                        &res.grads.nets[k], nullptr,
                        net.config.recurrent() ? &dh_prev : nullptr);
      if (net.config.recurrent()) dh.swap(dh_prev);
    }
  }
  return res;
}

DqnTdLoss recurrent_dqn_td_loss(const EpisodeBatch& batch,
                                const AgentNet& online, const AgentNet& target,
                                double gamma) {
  for (const EpisodeRecord* e : batch.episodes)
    if (e->n_agents != 1)
      throw std::invalid_argument("recurrent_dqn_td_loss: expects 1 agent");
  const int B = batch.size();
  const int T = batch.max_length();
  const std::vector<int> members{0};
  Unroll on = unroll(online, batch, members, T, true);
  Unroll tg = unroll(target, batch, members, T + 1, false);

  DqnTdLoss res;
  Matrix td = Matrix::Zero(T, B);
  for (int t = 0; t < T; ++t)
    for (int b = 0; b < B; ++b) {
      if (!batch.valid(b, t)) continue;
      const EpisodeRecord& ep = *batch.episodes[b];
      const double boot =
          terminal_at(ep, t) ? 0.0 : gamma * masked_max(tg.q[t + 1], b, ep, t + 1, 0);
      td(t, b) = on.q[t](ep.action_at(t, 0), b) - (ep.rewards[t] + boot);
      ++res.valid_steps;
    }
  res.loss = td.squaredNorm() / res.valid_steps;
  if (!std::isfinite(res.loss))
    throw diffnet::NumericError("dqn_td_loss", "non-finite loss");

  res.grads = diffnet::zeros_like(online.params);
  Matrix dh = Matrix::Zero(online.config.state_rows(), B);
  Matrix dh_prev;
  for (int t = T - 1; t >= 0; --t) {
    Matrix dq = Matrix::Zero(online.config.n_actions, B);
    for (int b = 0; b < B; ++b) {
      if (!batch.valid(b, t)) continue;
      dq(batch.episodes[b]->action_at(t, 0), b) = 2.0 * td(t, b) / res.valid_steps;
    }
    diffnet::backward(online, on.caches[t], dq,
                      online.config.recurrent() ? &dh : nullptr, &res.grads,
                      nullptr, online.config.recurrent() ? &dh_prev : nullptr);
    if (online.config.recurrent()) dh.swap(dh_prev);
  }
  return res;
}

}  // namespace marl::qmix
