#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>

namespace blinksim {

// Stream tags keep the draws of different stages independent for the same seed.
enum class StreamTag : std::uint64_t {
  ThresholdPos = 0x01,
  ThresholdNeg = 0x02,
  Noise = 0x03,
  Brownian = 0x04,
  Poses = 0x05,
  Scene = 0x06,
  Texture = 0x07,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Order-sensitive mix of a seed with any number of 64-bit words.
template <typename... Words>
constexpr std::uint64_t hash_words(std::uint64_t seed, Words... words) {
  std::uint64_t h = splitmix64(seed);
  ((h = splitmix64(h ^ static_cast<std::uint64_t>(words))), ...);
  return h;
}

/// Philox4x32-10 block function (Salmon et al., SC'11).
inline std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> ctr,
                                               std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kM0 = 0xD2511F53u, kM1 = 0xCD9E8D57u;
  constexpr std::uint32_t kW0 = 0x9E3779B9u, kW1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      key[0] += kW0;
      key[1] += kW1;
    }
    const std::uint64_t p0 = std::uint64_t{kM0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kM1} * ctr[2];
    ctr = {static_cast<std::uint32_t>(p1 >> 32) ^ ctr[1] ^ key[0], static_cast<std::uint32_t>(p1),
           static_cast<std::uint32_t>(p0 >> 32) ^ ctr[3] ^ key[1], static_cast<std::uint32_t>(p0)};
  }
  return ctr;
}

/*
 * Counter-based generator: the output is a pure function of (key, stream, draw index).
 * Keying a generator by pixel coordinates makes every per-pixel draw independent of
 * evaluation order, which is what keeps multi-threaded simulation byte-identical.
 */
class CounterRng {
 public:
  CounterRng(std::uint64_t key, std::uint64_t stream = 0) : key_(key), stream_(stream) {}

  std::uint64_t next_u64() {
    if (buffered_ == 0) refill();
    return block_[--buffered_];
  }

  /// Uniform in the open interval (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; the spare value is kept for the next call.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double phi = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

 private:
  void refill() {
    const auto out = philox4x32(
        {static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
         static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
        {static_cast<std::uint32_t>(key_), static_cast<std::uint32_t>(key_ >> 32)});
    ++counter_;
    block_[0] = (std::uint64_t{out[2]} << 32) | out[3];
    block_[1] = (std::uint64_t{out[0]} << 32) | out[1];
    buffered_ = 2;
  }

  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> block_{};
  int buffered_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Generator for one (seed, stage, pixel) triple.
inline CounterRng pixel_rng(std::uint64_t seed, StreamTag tag, std::uint64_t pixel,
                            std::uint64_t stream = 0) {
  return CounterRng(hash_words(seed, static_cast<std::uint64_t>(tag), pixel), stream);
}

}  // namespace blinksim
