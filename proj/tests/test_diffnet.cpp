#include "doctest.h"

#include <filesystem>

#include "marl/diffnet/checkpoint.hpp"
#include "marl/diffnet/optimizer.hpp"
#include "support.hpp"

using namespace marl;
using namespace marl::diffnet;
using marl::test::central_diff;
using marl::test::random_matrix;
using marl::test::rel_error;

namespace {

// f = sum(cq .* q) + sum(ch .* h_new) for a batch of two.
struct AgentProbe {
  AgentNet net;
  Matrix x, h, cq, ch;

  double value() const {
    AgentOutput out = forward(net, x, h);
    double f = (out.q.array() * cq.array()).sum();
    if (net.config.recurrent()) f += (out.h_new.array() * ch.array()).sum();
    return f;
  }
};

AgentProbe make_agent_probe(Rng& rng, AgentArch arch) {
  AgentProbe p{test::random_agent_net(rng, arch), {}, {}, {}, {}};
  const auto& c = p.net.config;
  p.x = random_matrix(c.input_dim, 2, rng);
  if (c.recurrent()) {
    p.h = random_matrix(c.hidden_dim, 2, rng);
    p.ch = random_matrix(c.hidden_dim, 2, rng);
  }
  p.cq = random_matrix(c.n_actions, 2, rng);
  return p;
}

double worst_agent_error(AgentProbe& p) {
  AgentOutput out = forward(p.net, p.x, p.h);
  ParamSet grads = zeros_like(p.net.params);
  Matrix d_obs, d_hidden;
  const bool rec = p.net.config.recurrent();
  backward(p.net, out.cache, p.cq, rec ? &p.ch : nullptr, &grads, &d_obs,
           rec ? &d_hidden : nullptr);
  auto f = [&] { return p.value(); };
  double worst = 0.0;
  for (auto& [name, t] : p.net.params)
    for (std::size_t i = 0; i < t.size(); ++i)
      worst = std::max(worst, rel_error(central_diff(&t.data[i], f),
                                        grads.at(name).data[i]));
  for (Eigen::Index i = 0; i < p.x.size(); ++i)
    worst = std::max(worst, rel_error(central_diff(p.x.data() + i, f), d_obs(i)));
  if (rec)
    for (Eigen::Index i = 0; i < p.h.size(); ++i)
      worst = std::max(worst,
                       rel_error(central_diff(p.h.data() + i, f), d_hidden(i)));
  return worst;
}

MixingNet random_mixer(Rng& rng) {
  MixingNetConfig c;
  c.n_agents = 2 + static_cast<int>(rng.below(3));
  c.state_dim = 2 + static_cast<int>(rng.below(4));
  c.embed_dim = 2 + static_cast<int>(rng.below(3));
  return MixingNet::create(c, rng.next_u64());
}

}  // namespace

TEST_CASE("agent net gradients match central differences on random nets") {
  Rng rng(11);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const auto arch = static_cast<AgentArch>(k % 3);
    AgentProbe p = make_agent_probe(rng, arch);
    worst = std::max(worst, worst_agent_error(p));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("mixing net gradients match central differences on random nets") {
  Rng rng(12);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    MixingNet mix = random_mixer(rng);
    Matrix qs = random_matrix(mix.config.n_agents, 3, rng, -3.0, 3.0);
    Matrix st = random_matrix(mix.config.state_dim, 3, rng);
    const Eigen::RowVectorXd c = random_matrix(1, 3, rng);
    auto f = [&] { return (mixing_forward(mix, qs, st).q_total.array() * c.array()).sum(); };
    MixingOutput out = mixing_forward(mix, qs, st);
    ParamSet grads = zeros_like(mix.params);
    Matrix d_qs, d_state;
    mixing_backward(mix, out.cache, c, &grads, &d_qs, &d_state);
    for (auto& [name, t] : mix.params)
      for (std::size_t i = 0; i < t.size(); ++i)
        worst = std::max(worst, rel_error(central_diff(&t.data[i], f),
                                          grads.at(name).data[i]));
    for (Eigen::Index i = 0; i < qs.size(); ++i)
      worst = std::max(worst, rel_error(central_diff(qs.data() + i, f), d_qs(i)));
    for (Eigen::Index i = 0; i < st.size(); ++i)
      worst = std::max(worst, rel_error(central_diff(st.data() + i, f), d_state(i)));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("mixer is monotone in every agent's Q") {
  Rng rng(13);
  for (int k = 0; k < 1000; ++k) {
    MixingNet mix = random_mixer(rng);
    Matrix qs = random_matrix(mix.config.n_agents, 1, rng, -10.0, 10.0);
    Matrix st = random_matrix(mix.config.state_dim, 1, rng);
    MixingOutput out = mixing_forward(mix, qs, st);
    Matrix d_qs;
    mixing_backward(mix, out.cache, Eigen::RowVectorXd::Ones(1), nullptr, &d_qs,
                    nullptr);
    REQUIRE(d_qs.minCoeff() >= -1e-9);
  }
}

TEST_CASE("batched forward equals per-column forward") {
  Rng rng(14);
  AgentNet net = test::random_agent_net(rng, AgentArch::kRecurrent);
  Matrix x = random_matrix(net.config.input_dim, 4, rng);
  Matrix h = random_matrix(net.config.hidden_dim, 4, rng);
  AgentOutput all = forward(net, x, h);
  for (int b = 0; b < 4; ++b) {
    AgentOutput one = forward(net, x.col(b), h.col(b));
    CHECK((one.q.col(0) - all.q.col(b)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((one.h_new.col(0) - all.h_new.col(b)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("hidden state carries information between steps") {
  Rng rng(15);
  AgentNet net = test::random_agent_net(rng, AgentArch::kRecurrent);
  Matrix x = random_matrix(net.config.input_dim, 1, rng);
  Matrix h0 = Matrix::Zero(net.config.hidden_dim, 1);
  Matrix h1 = random_matrix(net.config.hidden_dim, 1, rng);
  CHECK((forward(net, x, h0).q - forward(net, x, h1).q).norm() > 0.0);
}

TEST_CASE("input jacobian rows equal single-action gradients") {
  Rng rng(16);
  AgentNet net = test::random_agent_net(rng, AgentArch::kRecurrent);
  auto x = test::random_vec(net.config.input_dim, rng);
  auto h = test::random_vec(net.config.hidden_dim, rng);
  RowMatrix j = input_jacobian(net, x, h);
  for (int a = 0; a < net.config.n_actions; ++a) {
    Vector g = action_input_gradient(net, x, h, a);
    CHECK((j.row(a).transpose() - g).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("dimension and numeric errors") {
  Rng rng(17);
  AgentNet net = test::random_agent_net(rng, AgentArch::kMlp);
  CHECK_THROWS_AS(forward(net, Matrix::Zero(net.config.input_dim + 1, 1), Matrix()),
                  DimensionError);
  Matrix bad = Matrix::Zero(net.config.input_dim, 1);
  bad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward(net, bad, Matrix()), NumericError);
}

TEST_CASE("zero gradient leaves parameters unchanged for every optimizer") {
  Rng rng(18);
  for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kRmsProp, OptimizerKind::kAdam}) {
    AgentNet net = test::random_agent_net(rng, AgentArch::kRecurrent);
    const ParamSet before = net.params;
    const ParamSet zero = zeros_like(net.params);
    OptimizerConfig c;
    c.kind = kind;
    Optimizer opt(c);
    opt.step({{"n", &net.params, &zero}});
    CHECK(net.params == before);
  }
}

TEST_CASE("sgd step and global norm clipping") {
  ParamSet p{{"w", Tensor::vector({1.0, 2.0})}};
  ParamSet g{{"w", Tensor::vector({3.0, 4.0})}};
  OptimizerConfig c;
  c.lr = 0.1;
  c.clip_norm = 1.0;
  ParamSet out = optimizer_step(p, g, c);
  // the gradient of norm 5 is scaled to norm 1
  CHECK(out.at("w").data[0] == doctest::Approx(1.0 - 0.1 * 0.6));
  CHECK(out.at("w").data[1] == doctest::Approx(2.0 - 0.1 * 0.8));
  c.clip_norm = 0.0;
  out = optimizer_step(p, g, c);
  CHECK(out.at("w").data[0] == doctest::Approx(0.7));
}

TEST_CASE("non-finite gradients are refused") {
  ParamSet p{{"w", Tensor::vector({1.0})}};
  ParamSet g{{"w", Tensor::vector({std::numeric_limits<double>::infinity()})}};
  Optimizer opt(OptimizerConfig{});
  CHECK_THROWS_AS(opt.step({{"n", &p, &g}}), NumericError);
  CHECK(p.at("w").data[0] == 1.0);
}

TEST_CASE("target sync") {
  Rng rng(19);
  AgentNet a = test::random_agent_net(rng, AgentArch::kRecurrent);
  AgentNet b = AgentNet::zeros(a.config);
  target_sync(a.params, b.params, SyncMode::kSoft, 0.5);
  const auto& w = a.params.at("out.weight").data;
  CHECK(b.params.at("out.weight").data[0] == doctest::Approx(0.5 * w[0]));
  target_sync(a.params, b.params, SyncMode::kHard);
  CHECK(b.params == a.params);
  AgentNet other = test::random_agent_net(rng, AgentArch::kLinear);
  CHECK_THROWS_AS(target_sync(a.params, other.params, SyncMode::kHard),
                  DimensionError);
}

TEST_CASE("checkpoint round trip is exact and tamper evident") {
  Rng rng(20);
  Checkpoint c;
  c.kind = "team";
  c.method = "qmix";
  c.rng_seed = 99;
  c.config = {{"a", 1}, {"b", "two"}};
  c.agents.emplace("agent", test::random_agent_net(rng, AgentArch::kRecurrent));
  c.mixers.emplace("mixer", MixingNet::create({3, 4, 2}, 5));
  const auto path = std::filesystem::temp_directory_path() / "marl_ckpt_test.json";
  save_checkpoint(c, path);
  CHECK(load_checkpoint(path) == c);

  nlohmann::json j = to_json(c);
  j["config"]["a"] = 2;
  CHECK_THROWS_AS(checkpoint_from_json(j), CheckpointError);
  j = to_json(c);
  j["format_version"] = 2;
  CHECK_THROWS_AS(checkpoint_from_json(j), CheckpointError);
  j = to_json(c);
  j["networks"]["agent"]["hidden_dim"] = 7;
  CHECK_THROWS_AS(checkpoint_from_json(j), CheckpointError);
  std::filesystem::remove(path);
}

TEST_CASE("fresh nets are deterministic in the seed") {
  AgentNetConfig c{5, 4, 3, AgentArch::kRecurrent};
  CHECK(AgentNet::create(c, 7).params == AgentNet::create(c, 7).params);
  CHECK(!(AgentNet::create(c, 7).params == AgentNet::create(c, 8).params));
}
