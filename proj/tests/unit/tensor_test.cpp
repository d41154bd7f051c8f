#include <gtest/gtest.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "colornorm/error.hpp"
#include "colornorm/exact_sum.hpp"
#include "colornorm/rng.hpp"
#include "colornorm/tensor.hpp"

namespace cn = colornorm;

namespace {

// Straight transcription of the published splitmix64 reference.
std::uint64_t splitmix_ref(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

TEST(Rng, SeedZeroFirstOutput) {
  cn::Rng rng(0);
  EXPECT_EQ(rng.next_u64(), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, MatchesReferenceStream) {
  for (std::uint64_t seed : {0ULL, 1ULL, 42ULL, 0xFFFFFFFFFFFFFFFFULL}) {
    cn::Rng rng(seed);
    std::uint64_t ref = seed;
    for (int i = 0; i < 1000; ++i) ASSERT_EQ(rng.next_u64(), splitmix_ref(ref)) << "seed " << seed << " i " << i;
  }
}

TEST(Rng, SuccessiveOutputsDiffer) {
  cn::Rng rng(0);
  const auto a = rng.next_u64();
  EXPECT_NE(a, rng.next_u64());
}

TEST(Rng, TenThousandDrawsReproducible) {
  cn::Rng a(123456789), b(123456789);
  for (int i = 0; i < 10000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, UniformSeed42FirstDraw) {
  cn::Rng rng(42);
  // (u >> 11) * 2^-53 mapped onto [-0.2f, 0.2f) in double, rounded to float.
  EXPECT_EQ(std::bit_cast<std::uint32_t>(rng.uniform(-0.2f, 0.2f)), 0x3dc5e3d4u);
}

TEST(Rng, UniformStaysInRange) {
  cn::Rng rng(7);
  for (int i = 0; i < 100000; ++i) {
    const float u = rng.uniform(0.0f, 1.0f);
    ASSERT_GE(u, 0.0f);
    ASSERT_LT(u, 1.0f);
    const float e = rng.uniform(-0.2f, 0.2f);
    ASSERT_LE(std::abs(e), 0.2f);
  }
}

TEST(Rng, UniformRejectsEmptyRange) {
  cn::Rng rng(1);
  EXPECT_THROW(rng.uniform(1.0f, 1.0f), cn::Error);
  EXPECT_THROW(rng.uniform(2.0f, 1.0f), cn::Error);
}

TEST(Rng, BelowIsUnbiasedEnough) {
  cn::Rng rng(99);
  std::vector<int> counts(10, 0);
  for (int i = 0; i < 100000; ++i) ++counts[rng.below(10)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Tensor, ShapeProductMatchesData) {
  cn::Tensor t({2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120u);
  EXPECT_EQ(cn::shape_product(t.shape()), 120u);
  EXPECT_THROW(cn::Tensor({2, 0, 3}), cn::Error);
  EXPECT_THROW(cn::Tensor({2, 3}, std::vector<float>(5)), cn::Error);
}

TEST(Tensor, ElementwiseExamples) {
  cn::Rng rng(3);
  cn::Tensor x({2, 3, 4, 4});
  for (auto& v : x.data()) v = rng.uniform(-1.0f, 1.0f);
  const cn::Tensor zeros(x.shape());
  EXPECT_EQ(cn::add(x, zeros), x);
  EXPECT_EQ(cn::sub(x, x), zeros);

  const cn::Tensor a({1}, 0.9f), b({1}, 0.15f);
  EXPECT_FLOAT_EQ(cn::add(a, b)[0], 1.05f);
}

TEST(Tensor, AddSubRoundTripOnDyadics) {
  cn::Rng rng(11);
  cn::Tensor a({64}), b({64});
  for (std::size_t i = 0; i < 64; ++i) {
    a[i] = static_cast<float>(static_cast<int>(rng.below(1024)) - 512) / 256.0f;
    b[i] = static_cast<float>(static_cast<int>(rng.below(1024)) - 512) / 64.0f;
  }
  EXPECT_EQ(cn::add(cn::sub(a, b), b), a);
}

TEST(Tensor, ShapeMismatchNamesBothShapes) {
  const cn::Tensor a({2, 3}), b({3, 2});
  try {
    cn::add(a, b);
    FAIL() << "expected ShapeMismatch";
  } catch (const cn::Error& e) {
    EXPECT_EQ(e.code(), cn::ErrorCode::ShapeMismatch);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("(2,3)"), std::string::npos) << msg;
    EXPECT_NE(msg.find("(3,2)"), std::string::npos) << msg;
  }
}

TEST(ExactSum, IndependentOfOrder) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> dist(-1e3, 1e3);
  std::vector<double> values(5000);
  for (auto& v : values) v = dist(gen) * std::pow(10.0, static_cast<int>(gen() % 7) - 3);

  cn::ExactSum forward;
  for (double v : values) forward.add(v);
  std::shuffle(values.begin(), values.end(), gen);
  cn::ExactSum lo, hi;
  for (std::size_t i = 0; i < values.size(); ++i) (i % 3 ? lo : hi).add(values[i]);
  hi.merge(lo);
  EXPECT_EQ(forward, hi);
  // Compensated long double reference; plain double summation of these
  // magnitudes drifts by ~1e-4.
  long double sum = 0, comp = 0;
  for (double v : values) {
    const long double t = sum + v;
    comp += std::fabs(sum) >= std::fabs(static_cast<long double>(v)) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  EXPECT_NEAR(forward.value(), static_cast<double>(sum + comp), 1e-9);
}
