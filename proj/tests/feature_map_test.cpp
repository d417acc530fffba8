#include "dsr/feature_map.hpp"

#include <gtest/gtest.h>

#include "test_support.hpp"

namespace dsr {
namespace {

using testing::Rng;

FeatureMapd constant_map(Index w, Index h, const Vector<double>& fiber) {
  FeatureMapd fm(w, h, fiber.size());
  fm.data().colwise() = fiber;
  return fm;
}

TEST(FeatureMap, RejectsBadShapesAndValues) {
  EXPECT_THROW(FeatureMapd(0, 2, 3), std::invalid_argument);
  EXPECT_THROW(FeatureMapd(2, 2, Matrix<double>(3, 5)), std::invalid_argument);
  Matrix<double> bad = Matrix<double>::Zero(2, 4);
  bad(1, 2) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(FeatureMapd(2, 2, bad), std::invalid_argument);
}

TEST(DivideIntoBlocks, CountAndRowMajorOrder) {
  Rng rng(1);
  auto fm = testing::random_map(rng, 2, 3, 4);
  auto bs = divide_into_blocks(fm);
  ASSERT_EQ(bs.size(), 6);
  EXPECT_EQ(bs.channels(), 4);
  Index k = 0;
  for (Index r = 0; r < 3; ++r) {
    for (Index c = 0; c < 2; ++c, ++k) {
      EXPECT_EQ(bs.tags()[static_cast<size_t>(k)], (BlockTag{1, c, r}));
      EXPECT_EQ(bs.matrix().col(k), fm.fiber(c, r));
    }
  }
}

TEST(DivideIntoBlocks, SingleCellAndConstantMap) {
  Vector<double> f(3);
  f << 1, 2, 3;
  auto one = divide_into_blocks(constant_map(1, 1, f));
  ASSERT_EQ(one.size(), 1);
  EXPECT_EQ(one.matrix().col(0), f);
  auto many = divide_into_blocks(constant_map(4, 2, f));
  for (Index i = 0; i < many.size(); ++i) EXPECT_EQ(many.matrix().col(i), f);
}

TEST(PoolBlock, AveragesWindow) {
  Rng rng(2);
  auto fm = testing::random_map(rng, 2, 2, 5);
  auto b = pool_block(fm, 0, 0, 2);
  const Vector<double> mean = fm.data().rowwise().mean();
  EXPECT_TRUE(b.vector.isApprox(mean, 1e-14));
  EXPECT_EQ(b.tag, (BlockTag{2, 0, 0}));
  EXPECT_EQ(pool_block(fm, 1, 0, 1).vector, fm.fiber(1, 0));
  Vector<double> f(2);
  f << -0.5, 4.0;
  EXPECT_TRUE(pool_block(constant_map(5, 4, f), 1, 1, 3).vector.isApprox(f, 1e-15));
}

TEST(PoolBlock, OutOfBounds) {
  FeatureMapd fm(3, 3, 2);
  EXPECT_THROW(pool_block(fm, 2, 0, 2), std::out_of_range);
  EXPECT_THROW(pool_block(fm, 0, 0, 4), std::out_of_range);
  EXPECT_THROW(pool_block(fm, -1, 0, 1), std::out_of_range);
  EXPECT_THROW(pool_block(fm, 0, 0, 0), std::out_of_range);
}

TEST(MultiscaleBlocks, CountsAndOrdering) {
  Rng rng(3);
  auto fm = testing::random_map(rng, 4, 4, 3);
  auto bs = multiscale_blocks(fm, {1, 2, 3});
  ASSERT_EQ(bs.size(), 29);
  EXPECT_EQ(bs.count_at_scale(1), 16);
  EXPECT_EQ(bs.count_at_scale(2), 9);
  EXPECT_EQ(bs.count_at_scale(3), 4);
  for (size_t i = 1; i < bs.tags().size(); ++i) {
    const auto& a = bs.tags()[i - 1];
    const auto& b = bs.tags()[i];
    EXPECT_TRUE(a.scale < b.scale || (a.scale == b.scale && (a.row < b.row || (a.row == b.row && a.col < b.col))));
  }
  for (Index i = 0; i < bs.size(); ++i) {
    const auto& t = bs.tags()[static_cast<size_t>(i)];
    EXPECT_EQ(bs.matrix().col(i), pool_block(fm, t.col, t.row, t.scale).vector);
  }
}

TEST(MultiscaleBlocks, SingleScaleEqualsDivide) {
  Rng rng(4);
  auto fm = testing::random_map(rng, 3, 5, 2);
  auto a = multiscale_blocks(fm, {1});
  auto b = divide_into_blocks(fm);
  EXPECT_EQ(a.matrix(), b.matrix());
  EXPECT_EQ(a.tags(), b.tags());
}

TEST(MultiscaleBlocks, TwoByTwoAverageIdentity) {
  Rng rng(5);
  auto bs = multiscale_blocks(testing::random_map(rng, 2, 2, 6), {1, 2});
  ASSERT_EQ(bs.size(), 5);
  const Vector<double> mean = bs.matrix().leftCols(4).rowwise().mean();
  EXPECT_TRUE(bs.matrix().col(4).isApprox(mean, 1e-14));
}

TEST(MultiscaleBlocks, ScaleOutOfRangeIsAnError) {
  FeatureMapd fm(4, 2, 3);
  EXPECT_THROW(multiscale_blocks(fm, {1, 3}), std::out_of_range);
  EXPECT_THROW(multiscale_blocks(fm, {0}), std::out_of_range);
  EXPECT_THROW(multiscale_blocks(fm, {}), std::invalid_argument);
}

TEST(MultiscaleBlocks, WindowCountProperty) {
  Rng rng(6);
  std::uniform_int_distribution<Index> dim(1, 7);
  for (int trial = 0; trial < 50; ++trial) {
    const Index w = dim(rng), h = dim(rng);
    std::set<int> scales;
    for (int s = 1; s <= std::min(w, h); ++s) {
      if (rng() % 2 || s == 1) scales.insert(s);
    }
    auto bs = multiscale_blocks(testing::random_map(rng, w, h, 2), scales);
    for (int s : scales) EXPECT_EQ(bs.count_at_scale(s), (w - s + 1) * (h - s + 1));
  }
}

TEST(Pooling, Linearity) {
  Rng rng(7);
  auto fm = testing::random_map(rng, 5, 4, 3);
  FeatureMapd scaled(5, 4, Matrix<double>(2.5 * fm.data()));
  auto a = multiscale_blocks(fm, {1, 2, 3});
  auto b = multiscale_blocks(scaled, {1, 2, 3});
  EXPECT_TRUE(b.matrix().isApprox(2.5 * a.matrix(), 1e-14));
}

TEST(Normalize, UnitL2) {
  Matrix<double> v(2, 3);
  v << 3, 0, -1, 4, 0, 0;
  BlockSetd bs(v, {{1, 0, 0}, {1, 1, 0}, {1, 2, 0}});
  auto n = normalize(bs, Normalization::unit_l2);
  EXPECT_NEAR(n.matrix()(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(n.matrix()(1, 0), 0.8, 1e-15);
  EXPECT_TRUE(n.matrix().col(1).isZero(0));
  EXPECT_EQ(n.zero_blocks(), std::vector<Index>{1});
  EXPECT_EQ(n.normalization(), Normalization::unit_l2);
  EXPECT_EQ(normalize(bs, Normalization::none).matrix(), v);
}

TEST(Normalize, NormsAreOne) {
  Rng rng(8);
  auto n = normalize(multiscale_blocks(testing::random_map(rng, 4, 4, 7), {1, 2}), Normalization::unit_l2);
  for (Index i = 0; i < n.size(); ++i) EXPECT_NEAR(n.matrix().col(i).norm(), 1.0, 1e-9);
}

TEST(RoundTrip, ScaleOneBlocksRebuildMapExactly) {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    auto fm = testing::random_map(rng, 1 + trial % 4, 2 + trial % 3, 3);
    auto back = to_feature_map(divide_into_blocks(fm), fm.width(), fm.height());
    EXPECT_TRUE((back.data().array() == fm.data().array()).all());
  }
}

TEST(ScatterGradients, ScaleOneIsIdentity) {
  Rng rng(10);
  auto fm = testing::random_map(rng, 3, 2, 4);
  auto bs = divide_into_blocks(fm);
  EXPECT_EQ(scatter_block_gradients(bs.matrix(), bs.tags(), 3, 2), fm.data());
}

TEST(ScatterGradients, IsAdjointOfPooling) {
  Rng rng(11);
  auto fm = testing::random_map(rng, 4, 3, 2);
  auto bs = multiscale_blocks(fm, {1, 2, 3});
  const Matrix<double> g = testing::gaussian(rng, 2, bs.size());
  // <g, P x> == <P^T g, x>
  const double lhs = (g.array() * bs.matrix().array()).sum();
  const double rhs = (scatter_block_gradients(g, bs.tags(), 4, 3).array() * fm.data().array()).sum();
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

}  // namespace
}  // namespace dsr
