#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace sbmkit {

// Counter-style generator built on the splitmix64 finalizer. One instance per
// (seed, iteration, item) triple gives every parallel work item its own
// stream, so results do not depend on thread count or scheduling.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  // Unbiased uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t threshold = -n % n;  // 2^64 mod n
    for (;;) {
      std::uint64_t r = (*this)();
      if (r >= threshold) return r % n;
    }
  }

  // Standard exponential via inversion.
  double exponential();

 private:
  std::uint64_t state_;
};

inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Domain tags keeping unrelated uses of the same (iteration, item) pair on
// distinct streams.
namespace stream_domain {
inline constexpr std::uint64_t kSoftInitUser = 0x11;
inline constexpr std::uint64_t kSoftInitItem = 0x12;
inline constexpr std::uint64_t kSoftInitTheta = 0x13;
inline constexpr std::uint64_t kSoftMcDraw = 0x14;
inline constexpr std::uint64_t kHardInit = 0x21;
inline constexpr std::uint64_t kHardSample = 0x22;
inline constexpr std::uint64_t kHardBipartiteInit = 0x23;
inline constexpr std::uint64_t kHardBipartiteSample = 0x24;
inline constexpr std::uint64_t kRegenerate = 0x31;
inline constexpr std::uint64_t kAplSources = 0x32;
inline constexpr std::uint64_t kCvShuffle = 0x41;
inline constexpr std::uint64_t kRandomBaseline = 0x42;
}  // namespace stream_domain

// Seed plus the derivation rule for per-item streams. Identical
// (seed, domain, iteration, item) quadruples always yield identical streams.
struct RngSpec {
  std::uint64_t seed = 1;

  SplitMix64 stream(std::uint64_t domain, std::uint64_t iteration,
                    std::uint64_t item) const {
    std::uint64_t s = mix64(seed ^ 0x6a09e667f3bcc909ull);
    s = mix64(s ^ domain);
    s = mix64(s ^ iteration);
    s = mix64(s ^ item);
    return SplitMix64(s);
  }
};

inline double SplitMix64::exponential() {
  // 1 - uniform01() is in (0, 1], so the log stays finite.
  return -std::log(1.0 - uniform01());
}

// Partial Fisher-Yates: first `count` entries of the returned vector are a
// uniform sample without replacement from [0, n).
inline std::vector<std::uint32_t> sample_without_replacement(
    std::uint32_t n, std::uint32_t count, SplitMix64& rng) {
  std::vector<std::uint32_t> idx(n);
  for (std::uint32_t i = 0; i < n; ++i) idx[i] = i;
  for (std::uint32_t i = 0; i < count && i + 1 < n; ++i) {
    std::uint32_t j = i + static_cast<std::uint32_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(count < n ? count : n);
  return idx;
}

}  // namespace sbmkit
