#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace modn {

/// Seeded random stream used by every stochastic component.
///
/// The distributions are implemented on top of the raw 64-bit engine rather
/// than the <random> distribution templates, whose output is
/// implementation-defined; given a seed the stream is identical across
/// standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n);
  bool bernoulli(double p);
  /// Standard normal via Box-Muller.
  double normal();

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace modn
