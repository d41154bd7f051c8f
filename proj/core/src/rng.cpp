#include "colornorm/rng.hpp"

#include <cmath>
#include <string>

#include "colornorm/error.hpp"

namespace colornorm {

std::uint64_t Rng::next_u64() noexcept {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform_double(double lo, double hi) {
  if (!(lo < hi)) {
    fail(ErrorCode::InvalidArgument,
         "uniform range requires lo < hi, got [" + std::to_string(lo) + ", " + std::to_string(hi) + ")");
  }
  const double unit = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  return lo + (hi - lo) * unit;
}

float Rng::uniform(float lo, float hi) {
  auto value = static_cast<float>(uniform_double(lo, hi));
  if (value >= hi) value = std::nextafter(hi, lo);
  return value;
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) fail(ErrorCode::InvalidArgument, "Rng::below requires n > 0");
  __extension__ using U128 = unsigned __int128;
  const auto wide = static_cast<U128>(next_u64()) * n;
  return static_cast<std::uint64_t>(wide >> 64);
}

}  // namespace colornorm
