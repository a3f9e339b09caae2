#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace subag {

/// SplitMix64 finalizer. Used both to derive stream keys and to expand a key
/// into generator state.
constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// xoshiro256** 1.0. Satisfies UniformRandomBitGenerator, but callers should
/// use the member distributions: std:: distributions are implementation
/// defined and would break cross-platform reproducibility.
class Xoshiro256 {
 public:
  using result_type = std::uint64_t;

  explicit Xoshiro256(std::uint64_t key) noexcept {
    // Standard SplitMix64 expansion: the i-th output is mix(key + i * golden).
    for (auto& word : state_) {
      word = splitmix64_mix(key);
      key += 0x9e3779b97f4a7c15ULL;
    }
  }

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  result_type operator()() noexcept {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1); safe as a log argument.
  double uniform_open() noexcept {
    return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Unbiased integer in [0, bound) by Lemire's multiply-and-reject.
  std::uint64_t below(std::uint64_t bound) noexcept {
    std::uint64_t x = (*this)();
    __uint128_t m = static_cast<__uint128_t>(x) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        x = (*this)();
        m = static_cast<__uint128_t>(x) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4]{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// A named, reproducible source of randomness. Streams are plain values;
/// every consumer builds its own engine from one.
struct RngStream {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  /// Key mixing seed and stream id; distinct (seed, id) pairs give distinct keys
  /// with overwhelming probability.
  [[nodiscard]] std::uint64_t key() const noexcept {
    return splitmix64_mix(splitmix64_mix(seed) ^ splitmix64_mix(stream_id + 0x632be59bd9b4e019ULL));
  }

  /// Sub-stream `index` of this stream, e.g. resample b of replicate r.
  [[nodiscard]] RngStream child(std::uint64_t index) const noexcept { return {key(), index}; }

  [[nodiscard]] Xoshiro256 engine() const noexcept { return Xoshiro256(key()); }

  friend bool operator==(const RngStream&, const RngStream&) = default;
};

inline RngStream derive_stream(std::uint64_t seed, std::uint64_t index) noexcept {
  return {seed, index};
}

}  // namespace subag
