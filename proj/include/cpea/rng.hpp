#pragma once
// Counter-based splittable RNG.  Every draw is a pure function of
// (seed, stream labels, counter), so rounds and replicas can be evaluated in
// any order -- or in parallel -- without changing a single bit of output.

#include <cstdint>

namespace cpea::rng {

// SplitMix64 finalizer; bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Stream key derived from a seed and up to three labels (round, purpose, ...).
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a,
                            std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ull);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return h;
}

inline double to_unit(std::uint64_t bits) {        // [0, 1)
  return double(bits >> 11) * 0x1.0p-53;
}
inline double to_symmetric(std::uint64_t bits) {   // [-1, 1)
  return double(bits >> 10) * 0x1.0p-53 - 1.0;
}

struct Stream {
  std::uint64_t key;
  std::uint64_t ctr = 0;
  explicit Stream(std::uint64_t k) : key(k) {}

  std::uint64_t next_bits() { return mix64(key ^ mix64(++ctr)); }
  double next_unit() { return to_unit(next_bits()); }
  double next_symmetric() { return to_symmetric(next_bits()); }
  // Uniform integer in [0, n); n must be positive.
  std::uint64_t next_below(std::uint64_t n) {
    return std::uint64_t((unsigned __int128)(next_bits()) * n >> 64);
  }
};

}  // namespace cpea::rng
