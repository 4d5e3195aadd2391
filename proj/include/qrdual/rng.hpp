#pragma once

#include <cstdint>
#include <random>

namespace qrdual {

/// splitmix64 finalizer; used to derive independent per-trial seeds from a
/// master seed so parallel runs do not depend on thread scheduling.
std::uint64_t mix_seed(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

/// Deterministic random stream. normal() goes through the inverse CDF so the
/// generated sequence does not depend on the standard library's
/// std::normal_distribution implementation.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform on the open interval (0,1).
  double uniform() {
    return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

  /// Uniform integer in [0, m).
  std::uint64_t uniform_index(std::uint64_t m);

 private:
  std::mt19937_64 gen_;
};

}  // namespace qrdual
