#include "marl/diffnet/mixing_net.hpp"

#include <cmath>

#include "marl/common/rng.hpp"

namespace marl::diffnet {

namespace {

using Eigen::Index;

const char* kHw1W = "hyper_w1.weight";
const char* kHw1B = "hyper_w1.bias";
const char* kHb1W = "hyper_b1.weight";
const char* kHb1B = "hyper_b1.bias";
const char* kHw2W = "hyper_w2.weight";
const char* kHw2B = "hyper_w2.bias";
const char* kV1W = "v1.weight";
const char* kV1B = "v1.bias";
const char* kV2W = "v2.weight";
const char* kV2B = "v2.bias";

std::vector<std::pair<std::string, std::vector<std::size_t>>> layout(
    const MixingNetConfig& c) {
  const auto n = static_cast<std::size_t>(c.n_agents);
  const auto s = static_cast<std::size_t>(c.state_dim);
  const auto e = static_cast<std::size_t>(c.embed_dim);
  return {{kHw1W, {n * e, s}}, {kHw1B, {n * e}}, {kHb1W, {e, s}},
          {kHb1B, {e}},        {kHw2W, {e, s}},  {kHw2B, {e}},
          {kV1W, {e, s}},      {kV1B, {e}},      {kV2W, {1, e}},
          {kV2B, {1}}};
}

const Tensor& param(const MixingNet& mix, const char* name) {
  auto it = mix.params.find(name);
  if (it == mix.params.end())
    throw DimensionError(std::string("MixingNet: missing parameter ") + name);
  return it->second;
}

Matrix affine(const Tensor& w, const Tensor& b, const Matrix& x) {
  Matrix y = w.as_matrix() * x;
  y.colwise() += b.as_vector();
  return y;
}

void accumulate(ParamSet* grads, const char* wname, const char* bname,
                const Matrix& delta, const Matrix& input) {
  if (!grads) return;
  grads->at(wname).as_matrix().noalias() += delta * input.transpose();
  grads->at(bname).as_vector() += delta.rowwise().sum();
}

}  // namespace

MixingNet MixingNet::zeros(const MixingNetConfig& config) {
  if (config.n_agents < 1 || config.state_dim < 1 || config.embed_dim < 1)
    throw DimensionError("MixingNet: all dimensions must be >= 1");
  MixingNet mix;
  mix.config = config;
  for (auto& [name, shape] : layout(config))
    mix.params.emplace(name, Tensor::zeros(shape));
  return mix;
}

MixingNet MixingNet::create(const MixingNetConfig& config, std::uint64_t seed) {
  MixingNet mix = zeros(config);
  Rng rng(seed);
  for (auto& [name, shape] : layout(config)) {
    const std::size_t fan =
        name == kV2W || name == kV2B ? config.embed_dim : config.state_dim;
    const double k = 1.0 / std::sqrt(static_cast<double>(fan));
    for (double& v : mix.params.at(name).data) v = rng.uniform(-k, k);
  }
  return mix;
}

MixingOutput mixing_forward(const MixingNet& mix, const Matrix& chosen_qs,
                            const Matrix& state) {
  const MixingNetConfig& c = mix.config;
  if (chosen_qs.rows() != c.n_agents || state.rows() != c.state_dim ||
      chosen_qs.cols() != state.cols())
    throw DimensionError("mixing forward: input shapes do not match the net");
  const Index n = c.n_agents;
  const Index e = c.embed_dim;
  const Index batch = chosen_qs.cols();

  MixingOutput out;
  MixingCache& k = out.cache;
  k.config = c;
  k.qs = chosen_qs;
  k.state = state;
  k.w1_raw = affine(param(mix, kHw1W), param(mix, kHw1B), state);
  k.hid_pre = affine(param(mix, kHb1W), param(mix, kHb1B), state);
  for (Index b = 0; b < batch; ++b)
    for (Index a = 0; a < n; ++a)
      k.hid_pre.col(b) +=
          chosen_qs(a, b) * k.w1_raw.col(b).segment(a * e, e).cwiseAbs();
  k.hid = k.hid_pre.unaryExpr(
      [](double x) { return x > 0.0 ? x : std::expm1(x); });
  k.w2_raw = affine(param(mix, kHw2W), param(mix, kHw2B), state);
  k.v_hid = affine(param(mix, kV1W), param(mix, kV1B), state).cwiseMax(0.0);
  const Eigen::RowVectorXd v =
      (param(mix, kV2W).as_matrix() * k.v_hid).row(0).array() +
      param(mix, kV2B).data[0];
  out.q_total =
      (k.w2_raw.cwiseAbs().array() * k.hid.array()).colwise().sum().matrix() +
      v;
  check_finite(out.q_total, "mixing");
  return out;
}

void mixing_backward(const MixingNet& mix, const MixingCache& k,
                     const Eigen::RowVectorXd& dq_total, ParamSet* grads,
                     Matrix* d_qs, Matrix* d_state) {
  const MixingNetConfig& c = mix.config;
  if (!(k.config == c))
    throw DimensionError("mixing backward: cache was produced by another net");
  if (dq_total.cols() != k.qs.cols())
    throw DimensionError("mixing backward: upstream gradient has wrong shape");
  if (grads && !same_layout(*grads, mix.params))
    throw DimensionError("mixing backward: gradient set does not match net");
  const Index n = c.n_agents;
  const Index e = c.embed_dim;
  const Index batch = k.qs.cols();

  const Matrix w2_sign = k.w2_raw.unaryExpr(
      [](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); });
  const Matrix w1_sign = k.w1_raw.unaryExpr(
      [](double x) { return static_cast<double>((x > 0.0) - (x < 0.0)); });

  // q_total = sum(|w2| .* hid) + V
  Matrix d_w2raw = (k.hid.array().rowwise() * dq_total.array()).matrix();
  d_w2raw = d_w2raw.cwiseProduct(w2_sign);
  const Matrix d_hid =
      (k.w2_raw.cwiseAbs().array().rowwise() * dq_total.array()).matrix();
  const Matrix elu_grad = k.hid_pre.unaryExpr(
      [](double x) { return x > 0.0 ? 1.0 : std::exp(x); });
  const Matrix d_hpre = d_hid.cwiseProduct(elu_grad);

  Matrix d_w1raw(n * e, batch);
  if (d_qs) d_qs->resize(n, batch);
  for (Index b = 0; b < batch; ++b) {
    for (Index a = 0; a < n; ++a) {
      auto seg = k.w1_raw.col(b).segment(a * e, e);
      d_w1raw.col(b).segment(a * e, e) =
          (k.qs(a, b) * d_hpre.col(b)).cwiseProduct(
              w1_sign.col(b).segment(a * e, e));
      if (d_qs) (*d_qs)(a, b) = seg.cwiseAbs().dot(d_hpre.col(b));
    }
  }

  // V = v2 . relu(V1 s + bv1) + bv2
  const Matrix dv = dq_total;  // 1 x B
  const Matrix d_vh =
      (param(mix, kV2W).as_matrix().transpose() * dv).cwiseProduct(
          (k.v_hid.array() > 0.0).cast<double>().matrix());

  accumulate(grads, kHw1W, kHw1B, d_w1raw, k.state);
  accumulate(grads, kHb1W, kHb1B, d_hpre, k.state);
  accumulate(grads, kHw2W, kHw2B, d_w2raw, k.state);
  accumulate(grads, kV1W, kV1B, d_vh, k.state);
  accumulate(grads, kV2W, kV2B, dv, k.v_hid);

  if (d_state) {
    *d_state = param(mix, kHw1W).as_matrix().transpose() * d_w1raw;
    d_state->noalias() += param(mix, kHb1W).as_matrix().transpose() * d_hpre;
    d_state->noalias() += param(mix, kHw2W).as_matrix().transpose() * d_w2raw;
    d_state->noalias() += param(mix, kV1W).as_matrix().transpose() * d_vh;
  }
}

double mixing_value(const MixingNet& mix, std::span<const double> chosen_qs,
                    std::span<const double> state) {
  Matrix q(static_cast<Index>(chosen_qs.size()), 1);
  for (std::size_t i = 0; i < chosen_qs.size(); ++i)
    q(static_cast<Index>(i), 0) = chosen_qs[i];
  Matrix s(static_cast<Index>(state.size()), 1);
  for (std::size_t i = 0; i < state.size(); ++i)
    s(static_cast<Index>(i), 0) = state[i];
  return mixing_forward(mix, q, s).q_total(0);
}

}  // namespace marl::diffnet
