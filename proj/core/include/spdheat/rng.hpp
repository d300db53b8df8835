#pragma once

#include <cmath>
#include <cstdint>

namespace spdheat {

// Counter-based splittable random stream. Each draw hashes (key, counter), so
// a stream is a pure value: copying it replays the sequence, and split()
// derives statistically independent child streams from an index. Per-sample
// child streams make parallel generation reproducible and independent of
// scheduling order.
class RandomStream {
 public:
  RandomStream() = default;
  explicit RandomStream(std::uint64_t seed) : key_(mix(seed ^ 0x5851f42d4c957f2dULL)) {}

  // Child stream for subtask `index`; deterministic in (parent key, index).
  RandomStream split(std::uint64_t index) const {
    RandomStream child;
    child.key_ = mix(key_ ^ mix(index + 0x632be59bd9b4e019ULL));
    return child;
  }

  std::uint64_t next_u64() {
    counter_ += 0x9e3779b97f4a7c15ULL;
    return mix(key_ ^ counter_);
  }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_open() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // Standard normal via Box-Muller (cosine branch; two draws per call).
  double gaussian() {
    const double u1 = uniform_open();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  std::uint64_t key() const { return key_; }

 private:
  // SplitMix64 finalizer; full-avalanche 64-bit mix.
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace spdheat
