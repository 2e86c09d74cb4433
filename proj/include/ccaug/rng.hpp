#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace ccaug {

// Counter-based deterministic random stream (splitmix64 core).
//
// Streams are keyed by up to four 64-bit values, e.g. (seed, epoch, sample
// index). Draws from a stream depend only on its key and draw count, never on
// how work is batched or ordered elsewhere, which is what makes training runs
// reproducible under any batch partition.
class RngStream {
public:
  explicit RngStream(std::uint64_t k0, std::uint64_t k1 = 0, std::uint64_t k2 = 0,
                     std::uint64_t k3 = 0) {
    state_ = mix(k0);
    state_ = mix(state_ ^ k1);
    state_ = mix(state_ ^ k2);
    state_ = mix(state_ ^ k3);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  // Uniform in [0,1), 53-bit resolution.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [-1,1).
  double next_symmetric() { return 2.0 * next_double() - 1.0; }

  // Uniform in [lo,hi).
  double next_range(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0,n).
  std::uint64_t next_below(std::uint64_t n) {
    // Multiply-shift; bias is negligible for the n used here (dataset sizes).
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::uint64_t>(m >> 64);
  }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

// Fourth-key domain tags that keep the project's derived streams disjoint.
// Training augmentation draws use (seed, epoch, sample index, augment);
// epoch shuffles use (seed, epoch, 0, shuffle); test-time prediction uses
// one shared (seed, 0, 0, predict) stream per evaluation call so the drawn
// transforms do not depend on dataset order; weight init uses
// (seed, 0, 0, weight_init).
namespace stream_tag {
inline constexpr std::uint64_t augment = 1;
inline constexpr std::uint64_t shuffle = 2;
inline constexpr std::uint64_t predict = 3;
inline constexpr std::uint64_t weight_init = 4;
}  // namespace stream_tag

}  // namespace ccaug
