#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "emgcnn/core.hpp"
#include "emgcnn/random.hpp"

using namespace emgcnn;

TEST(ClassTable, NamesAndIdsAreABijection) {
  EXPECT_EQ(kClassNames[0], "NM");
  EXPECT_EQ(kClassNames[1], "WS");
  EXPECT_EQ(kClassNames[2], "WP");
  EXPECT_EQ(kClassNames[3], "HO");
  EXPECT_EQ(kClassNames[4], "HC");
  for (int i = 0; i < kNumClasses; ++i) {
    const auto c = static_cast<ClassId>(i);
    EXPECT_EQ(class_from_name(class_name(c)), c);
    EXPECT_EQ(to_index(c), i);
  }
  EXPECT_FALSE(class_from_name("XX").has_value());
  EXPECT_FALSE(is_valid_class(5));
  EXPECT_FALSE(is_valid_class(-1));
}

TEST(ErrorHierarchy, FormatErrorsAreDataErrors) {
  EXPECT_THROW(throw TruncatedError("x"), FormatError);
  EXPECT_THROW(throw VersionError("x"), DataError);
  EXPECT_THROW(throw LengthMismatchError("x"), DataError);
  EXPECT_THROW(throw ShapeError("x"), DataError);
  EXPECT_THROW(throw IoError("x"), DataError);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42), c(43);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs = differs || x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformStaysInRangeWithMeanOneHalf) {
  Rng r(1);
  double sum = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  // Standard error of the mean is sqrt(1/12/n) ~ 6.5e-4.
  EXPECT_NEAR(sum / n, 0.5, 4e-3);
}

TEST(Rng, NormalMomentsMatchStandardNormal) {
  Rng r(2);
  const int n = 200000;
  double s1 = 0, s2 = 0;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s1 += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s1 / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.02);
}

TEST(Rng, BelowCoversRangeUniformly) {
  Rng r(3);
  std::array<int, 7> counts{};
  for (int i = 0; i < 70000; ++i) ++counts[r.below(7)];
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng r(4);
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  auto w = v;
  r.shuffle(w);
  EXPECT_NE(v, w);
  std::sort(w.begin(), w.end());
  EXPECT_EQ(v, w);
}

TEST(SeedDerivation, DistinctKeysGiveDistinctSeeds) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 20; ++s)
    for (std::uint64_t v = 0; v < 50; ++v) seen.insert(combine_seed(s, v));
  EXPECT_EQ(seen.size(), 1000u);
  EXPECT_NE(hash_string("S01"), hash_string("S02"));
  EXPECT_EQ(hash_string(""), 0xcbf29ce484222325ULL);
}
