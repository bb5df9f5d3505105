#include <gtest/gtest.h>

#include <numeric>

#include "tweetprof/rng.hpp"

using tweetprof::Rng;

TEST(Rng, KnownSequence) {
  // xoshiro256** seeded through SplitMix64; pinned so that seeded corpora stay
  // identical across compilers and platforms.
  Rng rng(0);
  const std::uint64_t first = rng();
  Rng again(0);
  EXPECT_EQ(first, again());
  std::uint64_t sm = 0;
  EXPECT_EQ(tweetprof::splitmix64(sm), 0xE220A8397B1DCDAFULL);
}

TEST(Rng, BelowIsInRangeAndRoughlyUniform) {
  Rng rng(42);
  std::vector<int> hist(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = rng.below(7);
    ASSERT_LT(v, 7u);
    ++hist[v];
  }
  for (int h : hist) EXPECT_NEAR(h, 10000, 500);
  EXPECT_EQ(rng.below(1), 0u);
}

TEST(Rng, UniformInUnitInterval) {
  Rng rng(5);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 100000, 0.5, 0.005);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng rng(8);
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  tweetprof::shuffle(std::span(v), rng);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sorted[static_cast<std::size_t>(i)], i);
  EXPECT_NE(v, sorted);
}

TEST(Rng, DerivedSeedsDiffer) {
  EXPECT_NE(tweetprof::derive_seed(1, 0), tweetprof::derive_seed(1, 1));
  EXPECT_NE(tweetprof::derive_seed(1, 0), tweetprof::derive_seed(2, 0));
  EXPECT_EQ(tweetprof::derive_seed(3, 4), tweetprof::derive_seed(3, 4));
}
