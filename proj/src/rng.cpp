#include "qrdual/rng.hpp"

#include "qrdual/gauss.hpp"

namespace qrdual {

std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return mix_seed(mix_seed(master) ^ mix_seed(stream * 0xD6E8FEB86659FD93ull + 1));
}

double RandomStream::normal() { return normal_quantile(uniform()); }

std::uint64_t RandomStream::uniform_index(std::uint64_t m) {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = m * (~0ull / m);
  std::uint64_t x;
  do {
    x = gen_();
  } while (x >= limit);
  return x % m;
}

}  // namespace qrdual
