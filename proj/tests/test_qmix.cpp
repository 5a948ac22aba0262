#include "doctest.h"

#include <set>

#include "marl/qmix/learner.hpp"
#include "marl/qmix/rollout.hpp"
#include "marl/qmix/train.hpp"
#include "support.hpp"

using namespace marl;
using namespace marl::qmix;
using marl::test::central_diff;
using marl::test::rel_error;

namespace {

void zero_all(TeamModel& t) {
  for (auto& n : t.nets)
    for (auto& [_, p] : n.params) std::fill(p.data.begin(), p.data.end(), 0.0);
  for (auto& [_, p] : t.mixer.params) std::fill(p.data.begin(), p.data.end(), 0.0);
}

std::vector<EpisodeRecord> random_episodes(const env::MicroBattle& env,
                                           const TeamModel& team, int n,
                                           std::uint64_t seed) {
  Rng rng(seed);
  std::vector<EpisodeRecord> out;
  for (int i = 0; i < n; ++i)
    out.push_back(collect_episode(env, team, seed + i, 1.0, rng).record);
  return out;
}

std::vector<const EpisodeRecord*> ptrs(const std::vector<EpisodeRecord>& v) {
  std::vector<const EpisodeRecord*> p;
  for (const auto& e : v) p.push_back(&e);
  return p;
}

// Counts within 3 sigma of a uniform split over the true entries of mask.
void check_uniform(const std::vector<int>& counts, const std::vector<bool>& mask,
                   int draws) {
  int k = 0;
  for (bool m : mask) k += m ? 1 : 0;
  const double p = 1.0 / k;
  const double sigma = std::sqrt(draws * p * (1.0 - p));
  for (std::size_t a = 0; a < mask.size(); ++a) {
    if (!mask[a]) {
      CHECK(counts[a] == 0);
      continue;
    }
    CHECK(std::abs(counts[a] - draws * p) < 3.0 * sigma);
  }
}

class StopHook : public VictimHook {
 public:
  explicit StopHook(int v) : v_(v) {}
  int victim() const override { return v_; }
  HookDecision decide(const VictimView& view) override {
    HookDecision d;
    if (!view.victim_alive) return d;
    d.kind = HookDecision::Kind::kOverride;
    d.target = env::kActionStop;
    return d;
  }

 private:
  int v_;
};

class IdentityHook : public VictimHook {
 public:
  int victim() const override { return 2; }
  HookDecision decide(const VictimView& view) override {
    HookDecision d;
    d.kind = HookDecision::Kind::kOverride;
    d.target = view.clean_action;
    return d;
  }
};

}  // namespace

TEST_CASE("greedy and masked greedy selection") {
  Rng rng(1);
  Vector q(3);
  q << 1, 3, 2;
  CHECK(act_epsilon_greedy({q}, {{true, true, true}}, 0.0, rng)[0] == 1);
  CHECK(act_epsilon_greedy({q}, {{true, false, true}}, 0.0, rng)[0] == 2);
  Vector ties = Vector::Zero(3);
  CHECK(masked_argmax(ties, {false, true, true}) == 1);
  CHECK_THROWS(act_epsilon_greedy({q}, {{true, true, true}}, 1.5, rng));
}

TEST_CASE("epsilon 1 is uniform over available actions") {
  Rng rng(2);
  Vector q(4);
  q << 5, 1, 1, 1;
  const std::vector<bool> mask{true, true, false, true};
  std::vector<int> counts(4, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) ++counts[act_epsilon_greedy({q}, {mask}, 1.0, rng)[0]];
  check_uniform(counts, mask, draws);
}

TEST_CASE("replay buffer evicts first-in and samples distinct episodes") {
  env::MicroBattle env;
  TeamModel team = TeamModel::create(env.config(), 4, 3, 1);
  auto eps = random_episodes(env, team, 5, 10);
  ReplayBuffer buf(3);
  for (const auto& e : eps) buf.insert(e);
  CHECK(buf.size() == 3);
  CHECK(buf.insertions() == 5);
  CHECK(buf.at(0) == eps[2]);
  Rng rng(3);
  auto s = buf.sample(3, rng);
  std::set<const EpisodeRecord*> distinct(s.begin(), s.end());
  CHECK(distinct.size() == 3);
  for (const auto* e : s) {
    bool found = false;
    for (int i = 2; i < 5; ++i) found = found || (*e == eps[i]);
    CHECK(found);
  }
  CHECK_THROWS(buf.sample(4, rng));
}

TEST_CASE("stored transitions round-trip exactly") {
  env::MicroBattle env;
  TeamModel team = TeamModel::create(env.config(), 4, 3, 1);
  Rng rng(4);
  env::Snapshot snap = env.reset(77);
  EpisodeRecord r = collect_episode(env, team, 77, 0.5, rng).record;
  REQUIRE(r.complete());
  for (int i = 0; i < 5; ++i)
    for (int f = 0; f < env::kObsDim; ++f)
      CHECK(r.obs_at(0, i)[f] == snap.observations[i].features[f]);
  for (int k = 0; k < env.state_dim(); ++k)
    CHECK(r.state_at(0)[k] == snap.global_state[k]);
  ReplayBuffer buf(2);
  buf.insert(r);
  CHECK(buf.at(0) == r);
}

TEST_CASE("td loss is zero for zero nets and zero rewards") {
  env::MicroBattle env;
  TeamModel team = TeamModel::create(env.config(), 4, 3, 1);
  auto eps = random_episodes(env, team, 2, 20);
  for (auto& e : eps) std::fill(e.rewards.begin(), e.rewards.end(), 0.0);
  zero_all(team);
  TdLoss td = qmix_td_loss(EpisodeBatch(ptrs(eps)), team, team, 0.0);
  CHECK(td.loss == 0.0);
}

TEST_CASE("one-step episode loss equals the hand computation") {
  env::EnvConfig cfg;
  env::MicroBattle env(cfg);
  TeamModel team = TeamModel::create(cfg, 4, 3, 1);
  zero_all(team);
  // q_i(a) = bias[a]; W1 = 1, w2 = 1, V = 0.5 so Q_tot = 3 elu(sum q) + 0.5
  for (int k = 0; k < 2; ++k) {
    auto& b = team.nets[k].params.at("out.bias").data;
    for (std::size_t a = 0; a < b.size(); ++a) b[a] = 0.1 * (a + 1) * (k + 1);
  }
  auto fill = [&](const char* name, double v) {
    auto& d = team.mixer.params.at(name).data;
    std::fill(d.begin(), d.end(), v);
  };
  fill("hyper_w1.bias", 1.0);
  fill("hyper_w2.bias", 1.0);
  fill("v2.bias", 0.5);

  env::Snapshot snap = env.reset(3);
  EpisodeRecord rec(5, env::kObsDim, env.state_dim(), env.n_actions());
  auto view = [&](const std::vector<env::AgentObservation>& obs,
                  const std::vector<double>& g) {
    std::vector<std::vector<double>> f;
    std::vector<std::vector<bool>> m;
    for (const auto& o : obs) {
      f.push_back(o.features);
      m.push_back(o.available);
    }
    rec.push_view(f, m, g);
  };
  view(snap.observations, snap.global_state);
  const std::vector<int> actions{1, 2, 3, 4, 1};
  rec.push_transition(actions, 0.7);
  view(snap.observations, snap.global_state);
  rec.terminated = true;

  double sum = 0.0;
  for (int i = 0; i < 5; ++i) sum += 0.1 * (actions[i] + 1) * (i < 2 ? 1 : 2);
  const double elu = sum > 0 ? sum : std::exp(sum) - 1.0;
  const double qtot = 3.0 * elu + 0.5;
  TdLoss td = qmix_td_loss(EpisodeBatch({&rec}), team, team, 0.99);
  CHECK(td.loss == doctest::Approx((qtot - 0.7) * (qtot - 0.7)).epsilon(1e-12));
}

TEST_CASE("qmix loss gradients match finite differences") {
  env::MicroBattle env;
  TeamModel online = TeamModel::create(env.config(), 5, 3, 1);
  TeamModel target = TeamModel::create(env.config(), 5, 3, 2);
  auto eps = random_episodes(env, online, 2, 30);
  EpisodeBatch batch(ptrs(eps));
  TdLoss td = qmix_td_loss(batch, online, target, 0.9);
  auto f = [&] { return qmix_td_loss(batch, online, target, 0.9).loss; };
  double worst = 0.0;
  auto sweep = [&](diffnet::ParamSet& p, const diffnet::ParamSet& g) {
    for (auto& [name, t] : p) {
      const std::size_t stride = std::max<std::size_t>(1, t.size() / 6);
      for (std::size_t i = 0; i < t.size(); i += stride)
        worst = std::max(worst, rel_error(central_diff(&t.data[i], f),
                                          g.at(name).data[i], 1e-5));
    }
  };
  sweep(online.nets[0].params, td.grads.nets[0]);
  sweep(online.nets[1].params, td.grads.nets[1]);
  sweep(online.mixer.params, td.grads.mixer);
  CHECK(worst < 1e-4);
}

TEST_CASE("single-agent recurrent dqn loss gradients match finite differences") {
  Rng rng(6);
  diffnet::AgentNetConfig c{env::kObsDim, 4, 8, diffnet::AgentArch::kRecurrent};
  AgentNet online = AgentNet::create(c, 1), target = AgentNet::create(c, 2);
  std::vector<EpisodeRecord> eps;
  for (int e = 0; e < 3; ++e) {
    EpisodeRecord r(1, env::kObsDim, 0, 8);
    const int len = 2 + e;
    for (int t = 0; t <= len; ++t) {
      std::vector<bool> m(8, true);
      m[t % 8] = false;
      r.push_view({test::random_vec(env::kObsDim, rng)}, {m}, {});
      if (t < len) r.push_transition({(t + 1) % 8}, rng.uniform(-1, 1));
    }
    r.terminated = e == 1;
    eps.push_back(std::move(r));
  }
  EpisodeBatch batch(ptrs(eps));
  DqnTdLoss td = recurrent_dqn_td_loss(batch, online, target, 0.95);
  auto f = [&] { return recurrent_dqn_td_loss(batch, online, target, 0.95).loss; };
  double worst = 0.0;
  for (auto& [name, t] : online.params) {
    const std::size_t stride = std::max<std::size_t>(1, t.size() / 10);
    for (std::size_t i = 0; i < t.size(); i += stride)
      worst = std::max(worst, rel_error(central_diff(&t.data[i], f),
                                        td.grads.at(name).data[i], 1e-5));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("training is deterministic and zero episodes returns the init") {
  env::EnvConfig ec;
  TrainConfig tc;
  tc.n_episodes = 0;
  tc.hidden_dim = 4;
  tc.embed_dim = 3;
  tc.eval_every = 0;
  TrainResult zero = train(ec, tc, 5);
  TeamModel init = TeamModel::create(ec, 4, 3, derive_seed(5, 0));
  CHECK(zero.team.nets[0].params == init.nets[0].params);
  CHECK(zero.team.mixer.params == init.mixer.params);

  tc.n_episodes = 12;
  tc.batch_size = 4;
  tc.buffer_capacity = 8;
  tc.target_sync_period = 3;
  tc.log_every = 4;
  TrainResult a = train(ec, tc, 5), b = train(ec, tc, 5);
  CHECK(a.updates == 9);
  CHECK(a.checkpoint == b.checkpoint);
  CHECK(!(a.team.nets[0].params == init.nets[0].params));
  std::ostringstream log;
  write_train_log_csv(a.log, log);
  CHECK(log.str().rfind("episode,loss,epsilon,eval_win_rate,eval_reward\n", 0) == 0);
}

TEST_CASE("team checkpoint round trip") {
  env::EnvConfig ec;
  TeamModel t = TeamModel::create(ec, 4, 3, 9);
  diffnet::Checkpoint c = to_checkpoint(t, team_config_json(ec, TrainConfig{}, 9), 9);
  TeamModel back = team_from_checkpoint(diffnet::checkpoint_from_json(diffnet::to_json(c)));
  CHECK(back.agent_net == t.agent_net);
  CHECK(back.nets[1].params == t.nets[1].params);
  CHECK(env_config_from_checkpoint(c).width == ec.width);
  c.kind = "adversary";
  CHECK_THROWS_AS(team_from_checkpoint(c), diffnet::CheckpointError);
}

TEST_CASE("evaluation hooks") {
  env::MicroBattle env;
  TeamModel team = TeamModel::create(env.config(), 8, 4, 3);
  EvalStats base = evaluate(env, team, 5, 11);
  IdentityHook id;
  EvalStats same = evaluate(env, team, 5, 11, &id);
  CHECK(same.episode_rewards == base.episode_rewards);
  CHECK(same.wins == base.wins);
  CHECK(same.changed == 0);

  // a team that only stops never deals damage and so cannot win
  int wins = 0;
  for (int e = 0; e < 5; ++e) {
    env::WorldState s = env.reset(episode_env_seed(11, e)).state;
    while (!s.terminated) {
      std::vector<int> a(5);
      for (int i = 0; i < 5; ++i)
        a[i] = s.units[i].alive ? env::kActionStop : env::kActionNoop;
      s = env.step(s, a).state;
    }
    wins += s.team_won ? 1 : 0;
  }
  CHECK(wins == 0);

  StopHook noop(0);
  EvalStats forced = evaluate(env, team, 3, 11, &noop);
  CHECK(forced.safety.total() == 0);
  CHECK(forced.attacked_steps > 0);
}

TEST_CASE("evaluation is reproducible") {
  env::MicroBattle env;
  TeamModel team = TeamModel::create(env.config(), 8, 4, 3);
  CHECK(evaluate(env, team, 4, 2).episode_rewards ==
        evaluate(env, team, 4, 2).episode_rewards);
}
