#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace lstmcf {

// Seedable generator with a fully specified output sequence.
//
// The engine is std::mt19937_64, whose output is fixed by the standard.
// Distributions are implemented here rather than taken from <random>
// because the standard leaves their algorithms to the implementation:
//   uniform()   = (next >> 11) * 2^-53, in [0, 1)
//   gaussian()  = Box-Muller on two uniforms, cosine branch only
//   below(n)    = rejection sampling on the top bits
// Seeds are mixed through SplitMix64 so nearby seeds give unrelated streams.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double gaussian(double stddev);
  // Uniform integer in [0, n).
  std::size_t below(std::size_t n);
  // Uniform integer in [lo, hi].
  long range(long lo, long hi) { return lo + static_cast<long>(below(static_cast<std::size_t>(hi - lo + 1))); }

 private:
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

// Fisher-Yates with Rng::below, so the permutation is portable.
std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng);

}  // namespace lstmcf
