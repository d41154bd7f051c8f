#pragma once

#include <cstdint>

namespace colornorm {

/// splitmix64 generator. Identical seeds give identical streams everywhere.
/// Single-owner: parallel work derives child generators via next_u64().
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next_u64() noexcept;

  /// lo + (hi - lo) * (u >> 11) * 2^-53, evaluated in double and rounded to
  /// float; a rounding result equal to hi is stepped down so the range stays
  /// half-open. Throws InvalidArgument when lo >= hi.
  float uniform(float lo, float hi);
  double uniform_double(double lo, double hi);

  /// Uniform integer in [0, n) via the 128-bit multiply-high mapping.
  std::uint64_t below(std::uint64_t n);

  /// A fresh generator seeded from this stream.
  Rng split() noexcept { return Rng(next_u64()); }

  std::uint64_t state() const noexcept { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace colornorm
