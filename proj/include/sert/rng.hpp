#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace sert {

/// Philox4x32-10 counter-based generator.
///
/// Every draw is a pure function of (seed, stream, counter), so any
/// subsequence can be regenerated independently: per-band noise uses the
/// band index as stream and the voxel index as counter, which keeps serial
/// and parallel generation bit-identical. Floating-point conversions are
/// done here rather than through <random> distributions, whose output is
/// implementation-defined.
class Philox {
 public:
  Philox(std::uint64_t seed, std::uint64_t stream) : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)}, stream_(stream) {}

  /// Raw 4x32-bit block for a counter value.
  std::array<std::uint32_t, 4> block(std::uint64_t counter) const;

  /// Uniform in [0, 1) with 53 random bits.
  double uniform(std::uint64_t counter) const;
  /// Uniform in (0, 1], safe for log().
  double uniform_open(std::uint64_t counter) const { return 1.0 - uniform(counter); }
  /// Standard normal via Box-Muller on one 128-bit block.
  double normal(std::uint64_t counter) const;

 private:
  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_;
};

/// Sequential convenience wrapper that advances its own counter.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream) : gen_(seed, stream) {}
  double uniform() { return gen_.uniform(counter_++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return gen_.normal(counter_++); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Random k-subset of [0, n) in ascending order (partial Fisher-Yates).
  std::vector<std::size_t> choose(std::size_t n, std::size_t k);

 private:
  Philox gen_;
  std::uint64_t counter_ = 0;
};

/// Derives an independent stream id from a tag and an index.
constexpr std::uint64_t stream_id(std::uint32_t tag, std::uint32_t index) {
  return (static_cast<std::uint64_t>(tag) << 32) | index;
}

}  // namespace sert
