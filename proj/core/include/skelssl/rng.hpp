#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace skelssl {

// Deterministic splitmix64 stream. Implemented in-repo instead of <random>
// so that draws are bit-identical across standard libraries; training
// reproducibility and stored-seed occlusion sets depend on that.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();

  // Uniform in [0, 1).
  double uniform();
  // Uniform in [lo, hi).
  double uniform(double lo, double hi);
  // Unbiased integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);
  // Standard normal via Box-Muller (no spare caching).
  double normal();
  double normal(double mean, double stddev);

  // k distinct indices drawn from [0, n), in draw order.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);
  // Fisher-Yates permutation of [0, n).
  std::vector<std::size_t> permutation(std::size_t n);
  // Permutation with no fixed point (n >= 2), for in-batch pairing.
  std::vector<std::size_t> derangement(std::size_t n);

  // Derive an independent child stream from this stream's seed and a tag.
  // Does not advance this stream.
  Rng fork(std::string_view tag) const;
  Rng fork(std::uint64_t tag) const;

  std::uint64_t seed() const { return state_; }

 private:
  std::uint64_t state_;
};

// FNV-1a 64-bit, used for config hashing and stream derivation.
std::uint64_t fnv1a64(std::string_view bytes);

}  // namespace skelssl
