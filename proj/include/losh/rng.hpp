#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace losh {

// Deterministic stream generator built on SplitMix64. Streams are keyed by
// (seed, label) so independent consumers never share state and results are
// stable across platforms and build configurations.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::string_view label)
      : state_(mix(seed ^ 0x9e3779b97f4a7c15ull, fnv1a(label))) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // uniform in [0,1)
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform in [lo,hi)
  double next_range(double lo, double hi) {
    return lo + (hi - lo) * next_unit();
  }

  // uniform integer in [lo,hi] inclusive
  int next_int(int lo, int hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

  bool next_bool() { return (next_u64() & 1u) != 0; }

 private:
  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return h;
  }

  static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b | 1u);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

inline std::string stream_label(std::string_view base, int index) {
  return std::string(base) + "/" + std::to_string(index);
}

}  // namespace losh
