#include "marl/common/rng.hpp"

#include <stdexcept>

namespace marl {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = engine_();
  while (x >= limit) x = engine_();
  return x % n;
}

int Rng::pick_available(const std::vector<bool>& mask) {
  std::uint64_t count = 0;
  for (bool m : mask) count += m ? 1 : 0;
  if (count == 0) throw std::invalid_argument("pick_available: empty mask");
  std::uint64_t k = below(count);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    if (k == 0) return static_cast<int>(i);
    --k;
  }
  return -1;  // unreachable
}

std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index) {
  std::uint64_t z = master_seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace marl
