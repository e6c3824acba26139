#pragma once

#include <cstdint>
#include <limits>

namespace smdk {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Counter-based random stream.
///
/// Draw i of stream s under seed k is `mix64(key + i * golden)` with
/// `key = mix64(mix64(k) + s * 0xD1B54A32D192ED03)`. Every stream is a pure
/// function of (seed, stream, draw index), so work split across threads by
/// stream id reproduces bit-for-bit whatever the thread count. Satisfies
/// UniformRandomBitGenerator, so the standard distributions accept it.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) noexcept
      : key_(mix64(mix64(seed) + stream * 0xD1B54A32D192ED03ULL)) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    ++counter_;
    return mix64(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  std::uint64_t draws() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

inline CounterRng seeded_rng(std::uint64_t seed) { return CounterRng(seed, 0); }

}  // namespace smdk
