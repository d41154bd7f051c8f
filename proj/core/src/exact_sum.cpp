#include "colornorm/exact_sum.hpp"

#include <cmath>
#include <string>

#include "colornorm/error.hpp"

namespace colornorm {

void ExactSum::add(double value) {
  const double scaled = std::ldexp(value, kFractionBits);
  if (std::fabs(scaled) < 0x1.0p62) {
    acc_ += static_cast<std::int64_t>(scaled);
    return;
  }
  if (!std::isfinite(value) || std::fabs(value) >= 0x1.0p43) {
    fail(ErrorCode::NonFinite, "value " + std::to_string(value) + " outside exact-sum range");
  }
  acc_ += static_cast<Int128>(scaled);
}

double ExactSum::value() const noexcept {
  return std::ldexp(static_cast<double>(acc_), -kFractionBits);
}

}  // namespace colornorm
