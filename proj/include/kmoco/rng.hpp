#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace kmoco {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream keyed by (seed, k0, k1, ...). All randomness in a run is
// drawn from streams derived this way, so results depend only on the keys and
// never on scheduling.
inline Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys = {}) {
  std::uint64_t h = splitmix64(seed);
  for (auto k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return Rng(h);
}

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Uniform integer in [lo, hi].
inline long randint(Rng& rng, long lo, long hi) {
  std::uniform_int_distribution<long> d(lo, hi);
  return d(rng);
}

inline double normal(Rng& rng) {
  std::normal_distribution<double> d(0.0, 1.0);
  return d(rng);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

}  // namespace kmoco
