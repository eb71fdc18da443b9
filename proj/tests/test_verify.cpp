#include <gtest/gtest.h>

#include <cmath>

#include "prime/errors.hpp"
#include "prime/verify.hpp"

using namespace prime;

TEST(Verify, SubsetCounts) {
  EXPECT_TRUE(verify::enumerate_boundary_subsets(1).empty());
  for (std::size_t n = 2; n <= 12; ++n) {
    const auto subsets = verify::enumerate_boundary_subsets(n);
    EXPECT_EQ(subsets.size(), std::size_t{1} << (n - 2)) << n;
    for (const auto& s : subsets) EXPECT_EQ(s.back(), n - 1);
  }
}

TEST(Verify, SegmentationCounts) {
  for (std::size_t n = 2; n <= 7; ++n) {
    std::size_t count = 0;
    verify::enumerate_segmentations(n, 5, [&](auto, auto) { ++count; });
    // sum_k C(n-2, k) 5^(k+1) = 5 * 6^(n-2)
    EXPECT_EQ(count, 5 * static_cast<std::size_t>(std::pow(6, n - 2))) << n;
  }
}

TEST(Verify, FiniteDifferencesOfQuadraticAreExact) {
  nn::Vector p(3);
  p << 0.5, -1.0, 2.0;
  const auto g = verify::finite_difference_grad([](const nn::Vector& v) { return v.squaredNorm() + 3 * v(0); }, p, 1e-3);
  nn::Vector expect = 2 * p;
  expect(0) += 3;
  EXPECT_LT((g - expect).norm(), 1e-9);
}

TEST(Verify, ZeroStepRejected) {
  nn::Vector p = nn::Vector::Zero(2);
  EXPECT_THROW(verify::finite_difference_grad([](const nn::Vector&) { return 0.0; }, p, 0.0), PreconditionError);
  EXPECT_THROW(verify::finite_difference_grad([](const nn::Vector&) { return 0.0; }, p, -1e-3), PreconditionError);
}

TEST(Verify, GradientCheckFlagsWrongGradient) {
  nn::Vector p(2);
  p << 1.0, 2.0;
  const double bad = verify::gradient_check(
      [](const nn::Vector& v, nn::Vector* g) {
        if (g) *g = v;  // true gradient is 2v
        return v.squaredNorm();
      },
      p);
  EXPECT_GT(bad, 0.3);
  EXPECT_EQ(verify::relative_error(p, p), 0.0);
}

TEST(Verify, RandomTablesRespectOptions) {
  Rng rng(1, Stream::kTest);
  verify::OracleOptions opt;
  opt.max_boundaries = 9;
  opt.quantum = 0.5;
  for (int i = 0; i < 50; ++i) {
    const auto t = verify::random_score_table(rng, opt);
    ASSERT_GE(t.size(), 2u);
    ASSERT_LE(t.size(), 9u);
    EXPECT_EQ(t.boundaries[0], 0);
    for (std::size_t a = 0; a < t.size(); ++a)
      for (std::size_t b = a + 1; b < t.size(); ++b)
        for (int k = 0; k < kNumClasses; ++k) {
          const double v = t.at(a, b, k);
          EXPECT_EQ(v, std::round(v / 0.5) * 0.5);
          EXPECT_LE(v, 0.0);
        }
  }
}
