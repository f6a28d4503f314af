#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "blinksim/inverse_gaussian.hpp"
#include "blinksim/rng.hpp"

using namespace blinksim;

// Published known-answer vectors for Philox4x32-10.
TEST(Philox, KnownAnswers) {
  using A4 = std::array<std::uint32_t, 4>;
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, {0, 0}), (A4{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u}));
  EXPECT_EQ(philox4x32({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu}, {0xffffffffu, 0xffffffffu}),
            (A4{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu}));
  EXPECT_EQ(philox4x32({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u}, {0xa4093822u, 0x299f31d0u}),
            (A4{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u}));
}

TEST(CounterRng, SameKeySameSequence) {
  CounterRng a(42, 7), b(42, 7), c(42, 8);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    differs |= va != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(CounterRng, UniformIsOpenInterval) {
  CounterRng r(1);
  double sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GT(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / n, 0.5, 0.005);
}

TEST(CounterRng, NormalMoments) {
  CounterRng r(2);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    s += z;
    s2 += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(HashWords, OrderSensitive) {
  EXPECT_NE(hash_words(1, 2u, 3u), hash_words(1, 3u, 2u));
  EXPECT_EQ(hash_words(1, 2u, 3u), hash_words(1, 2u, 3u));
  std::set<std::uint64_t> seen;
  for (std::uint64_t p = 0; p < 1000; ++p) seen.insert(hash_words(5, p));
  EXPECT_EQ(seen.size(), 1000u);
}

TEST(InverseGaussian, MomentsMatch) {
  CounterRng r(9);
  const double mu = 250.0, lambda = 1000.0;
  const int n = 200000;
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = sample_inverse_gaussian(mu, lambda, r);
    ASSERT_GT(x, 0.0);
    s += x;
    s2 += x * x;
  }
  const double mean = s / n;
  const double var = s2 / n - mean * mean;
  EXPECT_NEAR(mean / mu, 1.0, 0.02);
  EXPECT_NEAR(var / (mu * mu * mu / lambda), 1.0, 0.1);
}

TEST(InverseGaussian, RejectsBadShape) {
  CounterRng r(0);
  EXPECT_THROW(sample_inverse_gaussian(1.0, 0.0, r), InvalidArgument);
  EXPECT_EQ(sample_inverse_gaussian(0.0, 1.0, r), 0.0);
}
