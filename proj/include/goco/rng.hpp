#pragma once

#include <cstdint>
#include <limits>

namespace goco {

// Small counter-free generator (SplitMix64). Cheap to construct, which lets
// every (device, iteration, subset) triple own a fresh stream.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

// Uniform double in [0, 1) from the top 53 bits.
template <class Urbg>
double uniform01(Urbg& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Independent stream families derived from one master seed.
enum class Purpose : std::uint64_t {
  kStragglers = 1,
  kGradientNoise = 2,
  kAssignment = 3,
  kProblem = 4,
  kInitialization = 5,
};

namespace detail {
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}
}  // namespace detail

// Hash of (master, purpose, a, b, c) into a stream seed. Distinct keys give
// statistically independent SplitMix64 streams.
constexpr std::uint64_t derive_seed(std::uint64_t master, Purpose purpose,
                                    std::uint64_t a = 0, std::uint64_t b = 0,
                                    std::uint64_t c = 0) noexcept {
  std::uint64_t h = detail::mix64(master + 0x9E3779B97F4A7C15ULL);
  h = detail::mix64(h ^ (static_cast<std::uint64_t>(purpose) * 0xD6E8FEB86659FD93ULL));
  h = detail::mix64(h ^ (a + 0x632BE59BD9B4E019ULL));
  h = detail::mix64(h ^ (b + 0x8CB92BA72F3D8DD7ULL));
  h = detail::mix64(h ^ (c + 0xA0761D6478BD642FULL));
  return h;
}

inline SplitMix64 make_stream(std::uint64_t master, Purpose purpose, std::uint64_t a = 0,
                              std::uint64_t b = 0, std::uint64_t c = 0) {
  return SplitMix64(derive_seed(master, purpose, a, b, c));
}

}  // namespace goco
