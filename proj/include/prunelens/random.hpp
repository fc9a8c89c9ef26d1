#pragma once

// Counter-based random streams built on Philox4x32-10.
//
// Every draw is a pure function of (seed, purpose, layer, substream, position),
// so per-layer results do not depend on the order in which layers are visited
// and parallel sweeps reproduce serial ones bit for bit.
//
// Counter layout for block b of a stream:
//   ctr[0..1] = b (64-bit), ctr[2] = layer, ctr[3] = purpose << 24 | substream
//   key       = seed (low word, high word)

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace prunelens {

using Philox4x32Counter = std::array<std::uint32_t, 4>;
using Philox4x32Key = std::array<std::uint32_t, 2>;

inline Philox4x32Counter philox4x32_10(Philox4x32Counter ctr, Philox4x32Key key) {
  constexpr std::uint32_t kMul0 = 0xD2511F53u;
  constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

// Stream domains. Values are part of the reproducibility contract; never renumber.
enum class StreamPurpose : std::uint32_t {
  kInitWeights = 1,
  kRandomPrune = 2,
  kShuffle = 3,
  kRandomScores = 4,
  kEffectiveRandom = 5,
  kTest = 255,
};

class CounterStream {
public:
  CounterStream(std::uint64_t seed, StreamPurpose purpose, std::uint32_t layer,
                std::uint32_t substream = 0)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        layer_(layer),
        tag_((static_cast<std::uint32_t>(purpose) << 24) | (substream & 0xFFFFFFu)) {}

  std::uint64_t next_u64() {
    if (lane_ == 2) {
      refill();
    }
    return buffer_[lane_++];
  }

  // Uniform on [0, 1) with 53 random bits.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1].
  double next_open_unit() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  // Uniform integer in [0, bound), Lemire's nearly-divisionless rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    if (bound <= 1) {
      return 0;
    }
    __uint128_t product = static_cast<__uint128_t>(next_u64()) * bound;
    auto low = static_cast<std::uint64_t>(product);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        product = static_cast<__uint128_t>(next_u64()) * bound;
        low = static_cast<std::uint64_t>(product);
      }
    }
    return static_cast<std::uint64_t>(product >> 64);
  }

  // Standard normal via Box-Muller; both outputs of a pair are used.
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double radius = std::sqrt(-2.0 * std::log(next_open_unit()));
    const double angle = 2.0 * std::numbers::pi * next_unit();
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

private:
  void refill() {
    const Philox4x32Counter block = philox4x32_10(
        {static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32), layer_,
         tag_},
        key_);
    buffer_[0] = (std::uint64_t{block[1]} << 32) | block[0];
    buffer_[1] = (std::uint64_t{block[3]} << 32) | block[2];
    ++block_;
    lane_ = 0;
  }

  Philox4x32Key key_;
  std::uint32_t layer_;
  std::uint32_t tag_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int lane_ = 2;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Picks `count` distinct positions of `pool` uniformly at random (partial
// Fisher-Yates) and moves them to the front. Returns the chosen prefix.
template <typename T>
std::span<T> sample_prefix(std::span<T> pool, std::size_t count, CounterStream& stream) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(stream.next_below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  return pool.first(count);
}

} // namespace prunelens
