#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace dgrec {

// Counter-based 64-bit generator (SplitMix64). The n-th draw is a pure
// function of (seed, n), so streams replay identically on every platform and
// independent substreams can be forked by tag without sharing state.
//
// Reference: Steele, Lea & Flood, "Fast splittable pseudorandom number
// generators" (the standard splitmix64 finalizer).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64() { return mix(seed_ + (++counter_) * kGamma); }

  // Uniform in [0, 1) using the top 53 bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n), n > 0. Multiply-shift keeps the mapping
  // platform independent (no modulo-by-distribution variance).
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Uniform in [lo, hi).
  double next_range(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // Independent substream derived from (seed, tag, a, b). Forking does not
  // advance this generator.
  CounterRng fork(std::string_view tag, std::uint64_t a = 0,
                  std::uint64_t b = 0) const {
    std::uint64_t h = seed_;
    for (char c : tag) {
      h = mix(h ^ static_cast<unsigned char>(c));
    }
    h = mix(h ^ a);
    h = mix(h ^ b);
    return CounterRng(h);
  }

  static std::uint64_t mix(std::uint64_t z) {
    z += kGamma;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

// Seeded Fisher-Yates shuffle.
template <class T>
void shuffle(std::vector<T>& v, CounterRng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace dgrec
