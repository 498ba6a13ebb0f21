// Splittable pseudorandom generator and the samplers built on it.
//
// The core generator is SplitMix64 (Steele, Lea & Flood 2014; Vigna's
// fixed-increment variant). Substreams are derived by hashing
// (seed, key) pairs, so replicate b of a Monte Carlo run is
// reproducible in isolation and independent of worker scheduling.
#ifndef ZIPG_RNG_HPP
#define ZIPG_RNG_HPP

#include <cstdint>

namespace zipg {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

  // Independent stream for (this seed, key); used per bootstrap
  // replicate / Monte Carlo replicate / taxon.
  Rng substream(std::uint64_t key) const {
    return Rng(mix(state_ + 0xbf58476d1ce4e5b9ull * (key + 1)));
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform on [0,1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t uniform_below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  // Standard normal, Marsaglia polar method (second deviate cached).
  double normal();

  // Gamma(shape, scale) via Marsaglia-Tsang squeeze; shape < 1 handled
  // by the boosting identity.
  double gamma(double shape, double scale);

  // Poisson(mean): sequential inversion for small means, Hormann's
  // PTRS transformed rejection otherwise.
  long poisson(double mean);

 private:
  explicit Rng(std::uint64_t raw, bool) : state_(raw) {}

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace zipg

#endif
