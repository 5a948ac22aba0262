#include "marl/diffnet/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace marl::diffnet {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shp)
    : shape(std::move(shp)), data(product(shape), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shp, std::vector<double> values)
    : shape(std::move(shp)), data(values.begin(), values.end()) {
  if (product(shape) != data.size())
    throw DimensionError("Tensor: shape does not match data length");
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Eigen::Map<RowMatrix> Tensor::as_matrix() {
  return {data.data(), static_cast<Eigen::Index>(rows()),
          static_cast<Eigen::Index>(cols())};
}

Eigen::Map<const RowMatrix> Tensor::as_matrix() const {
  return {data.data(), static_cast<Eigen::Index>(rows()),
          static_cast<Eigen::Index>(cols())};
}

Eigen::Map<Vector> Tensor::as_vector() {
  return {data.data(), static_cast<Eigen::Index>(data.size())};
}

Eigen::Map<const Vector> Tensor::as_vector() const {
  return {data.data(), static_cast<Eigen::Index>(data.size())};
}

ParamSet zeros_like(const ParamSet& params) {
  ParamSet out;
  for (const auto& [name, t] : params) out.emplace(name, Tensor::zeros(t.shape));
  return out;
}

bool same_layout(const ParamSet& a, const ParamSet& b) {
  if (a.size() != b.size()) return false;
  auto it = b.begin();
  for (const auto& [name, t] : a) {
    if (it->first != name || it->second.shape != t.shape) return false;
    ++it;
  }
  return true;
}

double squared_norm(const ParamSet& grads) {
  double s = 0.0;
  for (const auto& [_, t] : grads)
    for (double v : t.data) s += v * v;
  return s;
}

bool all_finite(const ParamSet& params) {
  for (const auto& [_, t] : params)
    if (!t.all_finite()) return false;
  return true;
}

std::size_t parameter_count(const ParamSet& params) {
  std::size_t n = 0;
  for (const auto& [_, t] : params) n += t.size();
  return n;
}

NumericError::NumericError(std::string layer, const std::string& what)
    : std::runtime_error(what + " (layer " + layer + ")"),
      layer_(std::move(layer)) {}

void check_finite(const Matrix& m, const char* layer) {
  if (!m.allFinite()) throw NumericError(layer, "non-finite activation");
}

}  // namespace marl::diffnet
