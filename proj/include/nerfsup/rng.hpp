// Copyright Contributors to the nerfsup project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace nerfsup {

// splitmix64 finalizer, used only to fold stream keys into a seed.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
  std::uint64_t h = mix64(seed);
  for (std::uint64_t k : keys) h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

// Stream keys used across the pipeline so that independent consumers of one
// seed never share a stream.
namespace stream {
inline constexpr std::uint64_t kTrainRays = 0x1001;
inline constexpr std::uint64_t kTrainDepth = 0x1002;
inline constexpr std::uint64_t kTrainStrata = 0x1003;
inline constexpr std::uint64_t kPairs = 0x2001;
inline constexpr std::uint64_t kPixels = 0x2002;
inline constexpr std::uint64_t kCorrespondence = 0x2003;
inline constexpr std::uint64_t kDescInit = 0x3001;
inline constexpr std::uint64_t kDescBatch = 0x3002;
inline constexpr std::uint64_t kSplit = 0x4001;
inline constexpr std::uint64_t kFixture = 0x4002;
inline constexpr std::uint64_t kAnnotations = 0x4003;
}  // namespace stream

// Deterministic random stream. The engine output is fully specified by the
// standard; the conversions below are written out so that results do not
// depend on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::initializer_list<std::uint64_t> keys = {})
      : engine_(derive_seed(seed, keys)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n) by rejection; n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

 private:
  std::mt19937_64 engine_;
};

// Fisher-Yates with the portable index draw above.
template <typename Range>
void shuffle(Range& range, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(std::size(range));
  for (std::uint64_t i = n; i > 1; --i) {
    const std::uint64_t j = rng.uniform_index(i);
    using std::swap;
    swap(range[i - 1], range[j]);
  }
}

}  // namespace nerfsup
