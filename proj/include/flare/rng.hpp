#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "flare/errors.hpp"

namespace flare {

namespace detail {

// SplitMix64 finalizer. Bijective, good avalanche.
inline uint64_t mix64(uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace detail

// Combine ids into a stream id, e.g. substream(kClientStream, client, round).
inline uint64_t substream(uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  return detail::mix64(detail::mix64(detail::mix64(a) ^ b) ^ c);
}

// Counter-based generator: draw t of stream (seed, stream) is a pure hash of
// (seed, stream, t). Streams never interfere, so client iteration order and
// worker scheduling cannot change any sequence.
class SeededRng {
 public:
  SeededRng(uint64_t seed, uint64_t stream = 0)
      : key_(detail::mix64(detail::mix64(seed) ^ detail::mix64(~stream))),
        counter_(0) {}

  uint64_t next_u64() { return detail::mix64(key_ ^ counter_++); }

  // Uniform in [0, 1), 53-bit resolution.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller; consumes two draws.
  double next_normal() {
    double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(6.283185307179586476925286766559 * u2);
  }

  uint64_t counter() const { return counter_; }

 private:
  uint64_t key_;
  uint64_t counter_;
};

// d i.i.d. draws, mean 0, per-coordinate std sigma.
inline std::vector<double> gaussian_vector(SeededRng& rng, std::size_t d,
                                           double sigma) {
  if (sigma < 0) throw ParameterError("gaussian_vector: sigma must be >= 0");
  std::vector<double> v(d, 0.0);
  if (sigma == 0) return v;
  for (std::size_t i = 0; i < d; ++i) v[i] = sigma * rng.next_normal();
  return v;
}

}  // namespace flare
