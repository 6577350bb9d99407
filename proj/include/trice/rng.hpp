#ifndef TRICE_RNG_HPP
#define TRICE_RNG_HPP

#include <cstdint>
#include <random>

namespace trice {

using RngEngine = std::mt19937_64;

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace detail

/// Derives independent engines from a root seed. Substreams are keyed by up
/// to three integers (e.g. tag, step, example) so per-example work can run in
/// any order, or in parallel, without changing the draws.
class RngFactory {
 public:
  explicit RngFactory(std::uint64_t root_seed) : root_(root_seed) {}

  RngEngine make(std::uint64_t a, std::uint64_t b = 0,
                 std::uint64_t c = 0) const {
    std::uint64_t s = detail::splitmix64(root_ ^ detail::splitmix64(a));
    s = detail::splitmix64(s ^ detail::splitmix64(b));
    s = detail::splitmix64(s ^ detail::splitmix64(c));
    return RngEngine(s);
  }

  std::uint64_t root() const { return root_; }

 private:
  std::uint64_t root_;
};

// Stream tags used to key substreams off a run seed. Values are arbitrary
// but frozen: changing them changes every seeded result.
enum StreamTag : std::uint64_t {
  kStreamMemoryInit = 1,
  kStreamShuffle = 2,
  kStreamProposal = 3,
  kStreamAccept = 4,
  kStreamSubsample = 5,
  kStreamEval = 6,
  kStreamGuide = 7,
  kStreamSuite = 8,
};

/// Uniform on [0, 1) with 53-bit resolution.
inline double canonical_u01(RngEngine& eng) {
  return static_cast<double>(eng() >> 11) * 0x1.0p-53;
}

}  // namespace trice

#endif  // TRICE_RNG_HPP
