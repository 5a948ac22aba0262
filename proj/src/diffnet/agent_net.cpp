#include "marl/diffnet/agent_net.hpp"

#include <cmath>

#include "marl/common/rng.hpp"

namespace marl::diffnet {

namespace {

using Eigen::Index;

const char* kFc1W = "fc1.weight";
const char* kFc1B = "fc1.bias";
const char* kIhW = "gru.weight_ih";
const char* kIhB = "gru.bias_ih";
const char* kHhW = "gru.weight_hh";
const char* kHhB = "gru.bias_hh";
const char* kOutW = "out.weight";
const char* kOutB = "out.bias";

std::vector<std::pair<std::string, std::vector<std::size_t>>> layout(
    const AgentNetConfig& c) {
  const auto in = static_cast<std::size_t>(c.input_dim);
  const auto h = static_cast<std::size_t>(c.hidden_dim);
  const auto a = static_cast<std::size_t>(c.n_actions);
  switch (c.arch) {
    case AgentArch::kLinear:
      return {{kOutW, {a, in}}, {kOutB, {a}}};
    case AgentArch::kMlp:
      return {{kFc1W, {h, in}}, {kFc1B, {h}}, {kOutW, {a, h}}, {kOutB, {a}}};
    case AgentArch::kRecurrent:
      return {{kFc1W, {h, in}},     {kFc1B, {h}},     {kIhW, {3 * h, h}},
              {kIhB, {3 * h}},      {kHhW, {3 * h, h}}, {kHhB, {3 * h}},
              {kOutW, {a, h}},      {kOutB, {a}}};
  }
  return {};
}

// Fan-in used for initialization of each parameter.
std::size_t fan_in(const AgentNetConfig& c, const std::string& name) {
  if (name == kFc1W || name == kFc1B) return c.input_dim;
  if (name.rfind("gru.", 0) == 0) return c.hidden_dim;
  return c.arch == AgentArch::kLinear ? c.input_dim : c.hidden_dim;
}

void validate(const AgentNetConfig& c) {
  if (c.input_dim < 1 || c.n_actions < 1)
    throw DimensionError("AgentNet: input_dim and n_actions must be >= 1");
  if (c.arch != AgentArch::kLinear && c.hidden_dim < 1)
    throw DimensionError("AgentNet: hidden_dim must be >= 1");
}

const Tensor& param(const AgentNet& net, const char* name) {
  auto it = net.params.find(name);
  if (it == net.params.end())
    throw DimensionError(std::string("AgentNet: missing parameter ") + name);
  return it->second;
}

Tensor& grad(ParamSet& grads, const char* name) {
  auto it = grads.find(name);
  if (it == grads.end())
    throw DimensionError(std::string("AgentNet: missing gradient ") + name);
  return it->second;
}

Matrix sigmoid(const Matrix& m) {
  return (1.0 + (-m.array()).exp()).inverse().matrix();
}

Matrix affine(const Tensor& w, const Tensor& b, const Matrix& x) {
  Matrix y = w.as_matrix() * x;
  y.colwise() += b.as_vector();
  return y;
}

void accumulate(ParamSet* grads, const char* wname, const char* bname,
                const Matrix& delta, const Matrix& input) {
  if (!grads) return;
  grad(*grads, wname).as_matrix().noalias() += delta * input.transpose();
  grad(*grads, bname).as_vector() += delta.rowwise().sum();
}

}  // namespace

std::string to_string(AgentArch arch) {
  switch (arch) {
    case AgentArch::kLinear:
      return "linear";
    case AgentArch::kMlp:
      return "mlp";
    case AgentArch::kRecurrent:
      return "recurrent";
  }
  return "unknown";
}

AgentArch agent_arch_from_string(const std::string& s) {
  if (s == "linear") return AgentArch::kLinear;
  if (s == "mlp") return AgentArch::kMlp;
  if (s == "recurrent") return AgentArch::kRecurrent;
  throw std::invalid_argument("unknown agent architecture: " + s);
}

AgentNet AgentNet::zeros(const AgentNetConfig& config) {
  validate(config);
  AgentNet net;
  net.config = config;
  for (auto& [name, shape] : layout(config))
    net.params.emplace(name, Tensor::zeros(shape));
  return net;
}

AgentNet AgentNet::create(const AgentNetConfig& config, std::uint64_t seed) {
  AgentNet net = zeros(config);
  Rng rng(seed);
  // Initialize in layout order, not map order, so that adding a parameter
  // later does not reshuffle the others.
  for (auto& [name, shape] : layout(config)) {
    Tensor& t = net.params.at(name);
    const double k = 1.0 / std::sqrt(static_cast<double>(fan_in(config, name)));
    for (double& v : t.data) v = rng.uniform(-k, k);
  }
  return net;
}

AgentOutput forward(const AgentNet& net, const Matrix& obs,
                    const Matrix& hidden) {
  const AgentNetConfig& c = net.config;
  if (obs.rows() != c.input_dim)
    throw DimensionError("agent forward: observation has " +
                         std::to_string(obs.rows()) + " rows, expected " +
                         std::to_string(c.input_dim));
  AgentOutput out;
  AgentCache& k = out.cache;
  k.config = c;
  k.x = obs;
  if (c.arch == AgentArch::kLinear) {
    k.q = affine(param(net, kOutW), param(net, kOutB), obs);
  } else {
    k.a1 = affine(param(net, kFc1W), param(net, kFc1B), obs).cwiseMax(0.0);
    check_finite(k.a1, "fc1");
    if (c.arch == AgentArch::kMlp) {
      k.q = affine(param(net, kOutW), param(net, kOutB), k.a1);
    } else {
      const Index h = c.hidden_dim;
      if (hidden.rows() != h || hidden.cols() != obs.cols())
        throw DimensionError("agent forward: hidden state has wrong shape");
      k.h_prev = hidden;
      k.gi = affine(param(net, kIhW), param(net, kIhB), k.a1);
      k.gh = affine(param(net, kHhW), param(net, kHhB), hidden);
      k.r = sigmoid(k.gi.topRows(h) + k.gh.topRows(h));
      k.z = sigmoid(k.gi.middleRows(h, h) + k.gh.middleRows(h, h));
      k.n = (k.gi.bottomRows(h).array() +
             k.r.array() * k.gh.bottomRows(h).array())
                .tanh()
                .matrix();
      k.h_new = ((1.0 - k.z.array()) * k.n.array() +
                 k.z.array() * hidden.array())
                    .matrix();
      check_finite(k.h_new, "gru");
      k.q = affine(param(net, kOutW), param(net, kOutB), k.h_new);
    }
  }
  check_finite(k.q, "out");
  out.q = k.q;
  out.h_new = k.h_new;
  return out;
}

void backward(const AgentNet& net, const AgentCache& k, const Matrix& dq,
              const Matrix* dh_new, ParamSet* grads, Matrix* d_obs,
              Matrix* d_hidden) {
  const AgentNetConfig& c = net.config;
  if (!(k.config == c))
    throw DimensionError("agent backward: cache was produced by another net");
  if (dq.rows() != c.n_actions || dq.cols() != k.x.cols())
    throw DimensionError("agent backward: upstream gradient has wrong shape");
  if (grads && !same_layout(*grads, net.params))
    throw DimensionError("agent backward: gradient set does not match net");

  if (c.arch == AgentArch::kLinear) {
    accumulate(grads, kOutW, kOutB, dq, k.x);
    if (d_obs) *d_obs = param(net, kOutW).as_matrix().transpose() * dq;
    return;
  }

  Matrix da1;
  if (c.arch == AgentArch::kMlp) {
    accumulate(grads, kOutW, kOutB, dq, k.a1);
    da1 = param(net, kOutW).as_matrix().transpose() * dq;
  } else {
    const Index h = c.hidden_dim;
    accumulate(grads, kOutW, kOutB, dq, k.h_new);
    Matrix dh = param(net, kOutW).as_matrix().transpose() * dq;
    if (dh_new) {
      if (dh_new->rows() != h || dh_new->cols() != dq.cols())
        throw DimensionError("agent backward: hidden gradient has wrong shape");
      dh += *dh_new;
    }
    const auto z = k.z.array();
    const auto r = k.r.array();
    const auto n = k.n.array();
    const Matrix dn_pre =
        (dh.array() * (1.0 - z) * (1.0 - n.square())).matrix();
    const Matrix dz_pre =
        (dh.array() * (k.h_prev.array() - n) * z * (1.0 - z)).matrix();
    const auto ghn = k.gh.bottomRows(h).array();
    const Matrix dr_pre = (dn_pre.array() * ghn * r * (1.0 - r)).matrix();

    Matrix dgi(3 * h, dq.cols());
    dgi << dr_pre, dz_pre, dn_pre;
    Matrix dgh(3 * h, dq.cols());
    dgh << dr_pre, dz_pre, (dn_pre.array() * r).matrix();

    accumulate(grads, kIhW, kIhB, dgi, k.a1);
    accumulate(grads, kHhW, kHhB, dgh, k.h_prev);
    da1 = param(net, kIhW).as_matrix().transpose() * dgi;
    if (d_hidden) {
      *d_hidden = (dh.array() * z).matrix();
      d_hidden->noalias() += param(net, kHhW).as_matrix().transpose() * dgh;
    }
  }
  const Matrix dpre1 =
      (da1.array() * (k.a1.array() > 0.0).cast<double>()).matrix();
  accumulate(grads, kFc1W, kFc1B, dpre1, k.x);
  if (d_obs) *d_obs = param(net, kFc1W).as_matrix().transpose() * dpre1;
}

AgentGrads backward(const AgentNet& net, const AgentCache& cache,
                    const Matrix& dq, const Matrix* dh_new) {
  AgentGrads g;
  g.param_grads = zeros_like(net.params);
  backward(net, cache, dq, dh_new, &g.param_grads, &g.d_obs,
           net.config.recurrent() ? &g.d_hidden : nullptr);
  return g;
}

Tensor initial_hidden(const AgentNet& net) {
  return Tensor::zeros({static_cast<std::size_t>(net.config.state_rows())});
}

namespace {

Matrix column(std::span<const double> v) {
  Matrix m(static_cast<Index>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) m(static_cast<Index>(i), 0) = v[i];
  return m;
}

void check_single(const AgentNet& net, std::size_t obs_len,
                  std::size_t hidden_len) {
  if (obs_len != static_cast<std::size_t>(net.config.input_dim))
    throw DimensionError("observation length " + std::to_string(obs_len) +
                         " != input_dim " +
                         std::to_string(net.config.input_dim));
  if (net.config.recurrent() &&
      hidden_len != static_cast<std::size_t>(net.config.hidden_dim))
    throw DimensionError("hidden length " + std::to_string(hidden_len) +
                         " != hidden_dim " +
                         std::to_string(net.config.hidden_dim));
}

}  // namespace

AgentStep agent_forward(const AgentNet& net, const Tensor& obs,
                        const Tensor& hidden) {
  check_single(net, obs.size(), hidden.size());
  AgentOutput out = forward(net, column(obs.data), column(hidden.data));
  AgentStep step;
  step.q_values = Tensor::vector(
      std::vector<double>(out.q.data(), out.q.data() + out.q.size()));
  if (net.config.recurrent())
    step.new_hidden = Tensor::vector(std::vector<double>(
        out.h_new.data(), out.h_new.data() + out.h_new.size()));
  else
    step.new_hidden = hidden;
  step.cache = std::move(out.cache);
  return step;
}

Tensor input_gradient(const AgentNet& net, const Tensor& obs,
                      const Tensor& hidden, const Tensor& selector) {
  if (selector.size() != static_cast<std::size_t>(net.config.n_actions))
    throw DimensionError("input_gradient: selector length mismatch");
  AgentStep step = agent_forward(net, obs, hidden);
  Matrix dq = column(selector.data);
  Matrix d_obs;
  backward(net, step.cache, dq, nullptr, nullptr, &d_obs, nullptr);
  check_finite(d_obs, "input_gradient");
  return Tensor::vector(
      std::vector<double>(d_obs.data(), d_obs.data() + d_obs.size()));
}

Vector action_input_gradient(const AgentNet& net, std::span<const double> obs,
                             std::span<const double> hidden, int action) {
  check_single(net, obs.size(), hidden.size());
  if (action < 0 || action >= net.config.n_actions)
    throw DimensionError("action_input_gradient: action out of range");
  AgentOutput out = forward(net, column(obs), column(hidden));
  Matrix dq = Matrix::Zero(net.config.n_actions, 1);
  dq(action, 0) = 1.0;
  Matrix d_obs;
  backward(net, out.cache, dq, nullptr, nullptr, &d_obs, nullptr);
  check_finite(d_obs, "action_input_gradient");
  return d_obs.col(0);
}

RowMatrix input_jacobian(const AgentNet& net, std::span<const double> obs,
                         std::span<const double> hidden) {
  check_single(net, obs.size(), hidden.size());
  const Index a = net.config.n_actions;
  const Matrix x = column(obs).replicate(1, a);
  Matrix h;
  if (net.config.recurrent()) h = column(hidden).replicate(1, a);
  AgentOutput out = forward(net, x, h);
  Matrix d_obs;
  backward(net, out.cache, Matrix::Identity(a, a), nullptr, nullptr, &d_obs,
           nullptr);
  check_finite(d_obs, "input_jacobian");
  return d_obs.transpose();
}

Vector q_values(const AgentNet& net, std::span<const double> obs,
                std::span<const double> hidden, Vector* h_new) {
  check_single(net, obs.size(), hidden.size());
  AgentOutput out = forward(net, column(obs), column(hidden));
  if (h_new) *h_new = out.h_new.col(0);
  return out.q.col(0);
}

}  // namespace marl::diffnet
