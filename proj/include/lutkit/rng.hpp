#pragma once

#include <cstdint>
#include <span>

namespace lutkit {

/// SplitMix64 (Steele, Lea, Flood 2014): a 64-bit counter-based generator.
/// The state advances by the golden-ratio increment 0x9E3779B97F4A7C15 and
/// each output is the counter passed through a fixed 64-bit mixer, so the
/// stream depends only on the seed and is identical on every platform.
///
/// All derived draws (floats, indices, normals) are built here from the raw
/// stream instead of <random> distributions, whose output is
/// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Multiply-high reduction; n must be > 0.
  std::uint64_t index(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Standard normal via Box-Muller. Uses libm, so only the raw stream is
  /// guaranteed bit-identical across platforms.
  double normal();

  /// Independent child stream, e.g. one per sweep cell.
  Rng split() { return Rng(next_u64()); }

  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(index(i));
      std::swap(values[i - 1], values[j]);
    }
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lutkit
