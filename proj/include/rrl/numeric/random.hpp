#pragma once

#include <cstdint>

#include <Eigen/Dense>

namespace rrl {

/// xorshift64* generator (Vigna 2016) seeded through splitmix64.
///
/// next():  s ^= s >> 12; s ^= s << 25; s ^= s >> 27; return s * 0x2545F4914F6CDD1D
/// uniform(): top 53 bits of next() scaled by 2^-53, in [0, 1)
/// normal():  Box-Muller on two uniforms, second value cached
///
/// Streams derived with fork() are independent of how many values the
/// parent has drawn, so per-sample randomness does not depend on ordering.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next();
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  double normal(double mean, double stddev);
  bool bernoulli(double p);
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  Rng fork(std::uint64_t stream) const;
  std::uint64_t seed() const { return seed_; }

  Eigen::VectorXd normal_vector(Eigen::Index n, double stddev);

 private:
  std::uint64_t seed_;
  std::uint64_t state_;
  bool has_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace rrl
