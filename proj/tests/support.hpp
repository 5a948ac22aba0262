#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "marl/common/rng.hpp"
#include "marl/diffnet/agent_net.hpp"
#include "marl/diffnet/mixing_net.hpp"

namespace marl::test {

using diffnet::Matrix;

inline Matrix random_matrix(int rows, int cols, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.uniform(lo, hi);
  return m;
}

inline std::vector<double> random_vec(int n, Rng& rng, double lo = -1.0,
                                      double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero pairs from
// turning round-off into huge relative errors.
inline double rel_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Central difference of f with respect to *x.
inline double central_diff(double* x, const std::function<double()>& f,
                           double h = 1e-5) {
  const double old = *x;
  *x = old + h;
  const double fp = f();
  *x = old - h;
  const double fm = f();
  *x = old;
  return (fp - fm) / (2.0 * h);
}

inline diffnet::AgentNet random_agent_net(Rng& rng, diffnet::AgentArch arch) {
  diffnet::AgentNetConfig c;
  c.input_dim = 2 + static_cast<int>(rng.below(5));
  c.hidden_dim = 2 + static_cast<int>(rng.below(4));
  c.n_actions = 2 + static_cast<int>(rng.below(3));
  c.arch = arch;
  return diffnet::AgentNet::create(c, rng.next_u64());
}

}  // namespace marl::test
