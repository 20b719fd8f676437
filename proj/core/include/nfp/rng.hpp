#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace nfp {

// Seedable PRNG with named sub-streams (splitmix64 core, Box-Muller
// normals). The same (seed, stream, draw index) always yields the same
// value regardless of platform or standard library, which is what the
// byte-identical rerun contract rests on. Sub-streams derived from the
// same seed are independent of each other.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view stream);

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53 random bits.
  double next_double();

  // Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::uint64_t next_below(std::uint64_t n);

  // Standard normal draw.
  double next_normal();

  // Normal(0, stddev) redrawn until it lands inside [-2*stddev, 2*stddev].
  double next_truncated_normal(double stddev);

  std::uint64_t seed() const { return seed_; }
  const std::string& stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  std::string stream_;
  std::uint64_t state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace nfp
