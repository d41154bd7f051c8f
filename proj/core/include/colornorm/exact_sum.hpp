#pragma once

#include <cstdint>

namespace colornorm {

__extension__ using Int128 = __int128;

/// Order-independent accumulator. Each addend is truncated once to a
/// 2^-50 fixed-point grid and summed in a 128-bit integer, so the total is
/// identical for any summation order or partitioning across threads.
/// Addends must be finite with |v| < 2^43.
class ExactSum {
 public:
  static constexpr int kFractionBits = 50;

  void add(double value);
  void merge(const ExactSum& other) noexcept { acc_ += other.acc_; }

  double value() const noexcept;

  bool operator==(const ExactSum&) const = default;

 private:
  Int128 acc_ = 0;
};

}  // namespace colornorm
