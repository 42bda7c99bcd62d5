#pragma once

#include <cstdint>
#include <string>

namespace resem {

// Counter-addressed random stream: a PCG64 (XSL-RR 128/64) generator whose
// sequence is fully determined by a 64-bit master seed and a stream index.
// Identical (seed, stream) pairs reproduce identical draws bit for bit, so
// replicates can run in parallel on distinct streams and still be
// reproducible.  All derived draws (uniforms, Gaussians, integers) are
// implemented here rather than via <random> distributions to keep the output
// independent of the standard library implementation.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t next_u64();

  // Uniform on [0, 1), 53-bit resolution.
  double next_double();

  // Standard Gaussian via Box-Muller; second value of each pair is cached.
  double next_gaussian();

  // Uniform integer on [0, bound), unbiased.  bound must be positive.
  std::uint64_t next_below(std::uint64_t bound);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  static constexpr const char* kAlgorithm = "pcg64-xsl-rr";

 private:
  unsigned __int128 state_;
  unsigned __int128 inc_;
  std::uint64_t seed_;
  std::uint64_t stream_;
  double cached_gaussian_ = 0.0;
  bool has_cached_gaussian_ = false;
};

// Identifies how a realization was produced, for serialization.
struct SeedRecord {
  std::string algorithm = RngStream::kAlgorithm;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

inline SeedRecord seed_record(const RngStream& rng) {
  return SeedRecord{RngStream::kAlgorithm, rng.seed(), rng.stream()};
}

}  // namespace resem
