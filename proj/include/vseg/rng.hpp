#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace vseg {

/// Seeded random source with hand-rolled draw helpers so that the produced
/// float streams are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(static_cast<std::mt19937::result_type>(seed)) {}

  std::uint32_t next_u32() { return gen_(); }

  /// Uniform in [0,1) with 24 random mantissa bits.
  double uniform01() { return (next_u32() >> 8) * (1.0 / 16777216.0); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  float uniformf(float lo, float hi) { return static_cast<float>(uniform(lo, hi)); }

  /// Inclusive integer range.
  int uniform_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>((static_cast<std::uint64_t>(next_u32()) * span) >> 32);
  }

  /// Box-Muller; consumes two draws per call.
  double normal(double mean, double sigma) {
    const double u1 = (static_cast<double>(next_u32()) + 1.0) * (1.0 / 4294967296.0);
    const double u2 = next_u32() * (1.0 / 4294967296.0);
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * r * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(uniform_int(0, i))]);
    }
  }

 private:
  std::mt19937 gen_;
};

/// splitmix64; used to derive independent per-item seeds from a run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace vseg
