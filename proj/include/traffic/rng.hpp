#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace traffic {

// splitmix64 step; used for seed derivation and cheap config hashing.
inline uint64_t splitmix64(uint64_t& state) {
  state += 0x9e3779b97f4a7c15ull;
  uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Stable sub-stream seed: same (base, tag) always yields the same seed.
inline uint64_t derive_seed(uint64_t base, uint64_t tag) {
  uint64_t s = base;
  uint64_t a = splitmix64(s);
  s = base ^ (tag + 1) * 0x9e3779b97f4a7c15ull;
  uint64_t b = splitmix64(s);
  return a ^ (b + 0x517cc1b727220a95ull);
}

/// Seedable RNG with explicit, implementation-independent distributions.
/// std distributions are not pinned across standard libraries, so uniform
/// draws are implemented here; replays depend on the exact draw sequence.
class Rng {
 public:
  Rng() : engine_(0) {}
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t next_u64() { return engine_(); }

  // uniform on [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive bounds, unbiased via rejection
  int64_t uniform_int(int64_t lo, int64_t hi) {
    const uint64_t range = static_cast<uint64_t>(hi - lo) + 1;
    if (range == 0) return static_cast<int64_t>(next_u64());  // full 64-bit span
    const uint64_t limit = std::numeric_limits<uint64_t>::max() - std::numeric_limits<uint64_t>::max() % range;
    uint64_t draw;
    do {
      draw = next_u64();
    } while (draw >= limit);
    return lo + static_cast<int64_t>(draw % range);
  }

  // p <= 0 and p >= 1 are decided without consuming a draw
  bool bernoulli(double p) {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    return uniform() < p;
  }

  bool operator==(const Rng& other) const { return engine_ == other.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace traffic
