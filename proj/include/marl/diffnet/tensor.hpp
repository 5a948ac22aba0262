#pragma once

#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace marl::diffnet {

// Column-major; one column per batch element.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Storage aligned for the widest vector unit: Eigen peels reductions over a
// Map by address, so unaligned buffers would make rounding depend on malloc.
using Buffer = std::vector<double, Eigen::aligned_allocator<double>>;

// Flat row-major array plus shape.
struct Tensor {
  std::vector<std::size_t> shape;
  Buffer data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shp);
  Tensor(std::vector<std::size_t> shp, std::vector<double> values);

  static Tensor zeros(std::vector<std::size_t> shp) { return Tensor(std::move(shp)); }
  static Tensor vector(std::vector<double> values);

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  bool all_finite() const;

  // Views as a (rows x cols) row-major matrix.
  Eigen::Map<RowMatrix> as_matrix();
  Eigen::Map<const RowMatrix> as_matrix() const;
  Eigen::Map<Vector> as_vector();
  Eigen::Map<const Vector> as_vector() const;

  bool operator==(const Tensor&) const = default;
};

// Ordered by name so iteration (and serialization) order is stable.
using ParamSet = std::map<std::string, Tensor>;

ParamSet zeros_like(const ParamSet& params);
bool same_layout(const ParamSet& a, const ParamSet& b);
double squared_norm(const ParamSet& grads);
bool all_finite(const ParamSet& params);
std::size_t parameter_count(const ParamSet& params);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A non-finite value appeared; layer() names where it was first seen.
class NumericError : public std::runtime_error {
 public:
  NumericError(std::string layer, const std::string& what);
  const std::string& layer() const { return layer_; }

 private:
  std::string layer_;
};

void check_finite(const Matrix& m, const char* layer);

}  // namespace marl::diffnet
