#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>

namespace viclevr {

/// splitmix64 generator. Every random decision in the toolkit draws from this
/// stream so that outputs are bit-reproducible across platforms.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform integer in [0, k) via the high word of a 128-bit product.
  std::uint64_t uniform(std::uint64_t k) {
    const unsigned __int128 product =
        static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(k);
    return static_cast<std::uint64_t>(product >> 64);
  }

  /// Uniform real in [0, 1) with 53 random bits.
  double uniform_real() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (one value per call, the pair's second half discarded).
  double normal();

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

inline double SplitMix64::normal() {
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform_real();
  const double u2 = uniform_real();
  constexpr double kTwoPi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

/// In-place Fisher-Yates shuffle driven by `rng.uniform`.
template <typename Container>
void shuffle(Container& items, SplitMix64& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform(i));
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace viclevr
