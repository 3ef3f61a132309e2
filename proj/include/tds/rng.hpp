#pragma once

#include <cstdint>
#include <limits>

#include <boost/random/normal_distribution.hpp>

namespace tds {

inline constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ull;

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct RngSpec {
  std::uint64_t seed = 0;
  std::uint64_t stream_id = 0;

  // Independent sub-stream; distinct tags give distinct streams.
  RngSpec child(std::uint64_t tag) const {
    return {seed, mix64(stream_id ^ mix64(tag + kGoldenGamma))};
  }

  friend bool operator==(const RngSpec&, const RngSpec&) = default;
};

// SplitMix64 run in counter mode: output i is mix64(key + i * gamma). The key is
// a hash of (seed, stream_id), so every stream is addressable without state.
class CounterEngine {
 public:
  using result_type = std::uint64_t;

  explicit CounterEngine(RngSpec spec)
      : key_(mix64(spec.seed ^ mix64(spec.stream_id ^ 0x632BE59BD9B4E019ull))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix64(key_ + (++counter_) * kGoldenGamma); }

  // [0, 1)
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  // (0, 1)
  double uniform_open() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }
  double normal() { return normal_(*this); }

  // Uniform integer in [0, bound) by Lemire's multiply-shift with rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound == 0) return 0;
    for (;;) {
      const unsigned __int128 m = static_cast<unsigned __int128>((*this)()) * bound;
      const auto low = static_cast<std::uint64_t>(m);
      if (low >= bound || low >= (0 - bound) % bound) return static_cast<std::uint64_t>(m >> 64);
    }
  }

  std::uint64_t position() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  boost::random::normal_distribution<double> normal_;
};

}  // namespace tds
