#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace terra {

/// SplitMix64 finalizer; used to derive independent seeds.
constexpr uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of the named sub-stream `name`/`index` under a root seed. All
/// randomness in the pipeline is derived this way ("dataset", "init",
/// "training", "sampling", ...).
constexpr uint64_t substream_seed(uint64_t root, std::string_view name, uint64_t index = 0) {
  return mix64(mix64(root ^ fnv1a64(name)) + mix64(index + 0x632be59bd9b4e019ULL));
}

/// Deterministic random source. The engine is mt19937_64 (bit-specified by the
/// standard); the distributions are written out here because the standard
/// library ones are implementation-defined.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : engine_(seed) {}

  static Rng substream(uint64_t root, std::string_view name, uint64_t index = 0) {
    return Rng(substream_seed(root, name, index));
  }

  uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  uint64_t below(uint64_t n) {
    // Lemire-style rejection keeps the draw unbiased.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  /// Standard normal via Box-Muller; caches the second variate.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace terra
