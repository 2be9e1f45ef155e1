#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace c2af {

// Deterministic random source used everywhere the library needs randomness.
// std::mt19937_64 output is pinned by the standard, but the distribution
// classes are not, so the uniform/normal mappings are spelled out here:
//   uniform()  takes the top 53 bits of the raw draw, giving [0, 1)
//   normal()   is the Box-Muller transform over two uniforms
// Identical seeds therefore give identical streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream derived from (seed, tag). Tags keep unrelated
  // consumers (init, batching, noise, ...) from sharing draws.
  static Rng stream(std::uint64_t seed, std::uint64_t tag);

  std::uint64_t next_u64() { return engine_(); }

  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

  // Unbiased integer in [0, n), n >= 1, by rejection.
  std::size_t index(std::size_t n);

  // Fisher-Yates; std::shuffle is implementation-defined, this is not.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// SplitMix64; used to derive stream seeds and config fingerprints.
std::uint64_t splitmix64(std::uint64_t x);

}  // namespace c2af
