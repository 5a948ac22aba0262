#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace marl {

// Seedable random stream. Wraps mt19937_64 (whose output sequence is fixed by
// the standard) and draws uniforms with explicit arithmetic so that sequences
// do not depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform real in [0, 1) with 53 bits of precision.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). Rejection sampling removes modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Uniform index over entries of `mask` that are true. Requires at least one.
  int pick_available(const std::vector<bool>& mask);

 private:
  std::mt19937_64 engine_;
};

// Independent stream seed for (master_seed, index); splitmix64 finalizer.
std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index);

}  // namespace marl
