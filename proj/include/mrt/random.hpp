#pragma once

// Seeded random streams.
//
// Every stochastic operation takes an explicit 64-bit seed. Sub-streams are
// derived from a parent seed and a stream name with derive_seed(), so the
// value drawn for (problem i, rollout g) never depends on evaluation order:
//
//   derive_seed(parent, name, index) =
//       mix64(parent ^ mix64(fnv1a64(name)) ^ mix64(index + 0x9E3779B97F4A7C15))
//
// where mix64 is the SplitMix64 finalizer. Uniform doubles are built from the
// top 53 bits of an mt19937_64 draw, which keeps results identical across
// standard library implementations (std::uniform_*_distribution is not
// specified bit-for-bit).

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace mrt {

constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view stream,
                                    std::uint64_t index = 0) {
  return mix64(parent ^ mix64(fnv1a64(stream)) ^ mix64(index + 0x9E3779B97F4A7C15ULL));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform over {0, ..., n-1}; n must be positive.
  std::size_t index(std::size_t n) {
    auto i = static_cast<std::size_t>(uniform() * static_cast<double>(n));
    return i < n ? i : n - 1;
  }

  // Draws an index with the given (normalized) probabilities.
  std::size_t categorical(std::span<const double> probs) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      acc += probs[i];
      if (u < acc) return i;
    }
    // Rounding left u above the running sum; return the last positive entry.
    for (std::size_t i = probs.size(); i-- > 0;)
      if (probs[i] > 0.0) return i;
    return probs.size() - 1;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mrt
