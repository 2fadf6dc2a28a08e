#include "expadv/numeric.hpp"
#include "expadv/tensor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

using expadv::Shape;
using expadv::ShapeError;
using expadv::Tensor;

TEST(Tensor, ShapeAndSizeAgree) {
  Tensor t({2, 3, 4});
  EXPECT_EQ(t.size(), 24);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(t.dim(1), 3);
  EXPECT_TRUE((t.data().array() == 0.0).all());
}

TEST(Tensor, MismatchedDataIsAShapeError) {
  EXPECT_THROW(Tensor({2, 2}, Tensor::Storage::Zero(3)), ShapeError);
  EXPECT_THROW(Tensor({2, 0}), ShapeError);
}

TEST(Tensor, ExternalDataRejectsNonFinite) {
  EXPECT_THROW(Tensor::from_values({2}, {1.0, std::numeric_limits<double>::quiet_NaN()}), std::invalid_argument);
  EXPECT_THROW(Tensor::from_values({1}, {std::numeric_limits<double>::infinity()}), std::invalid_argument);
  EXPECT_NO_THROW(Tensor::from_values({2}, {1.0, -2.0}));
}

TEST(Tensor, MatrixViewIsRowMajor) {
  Tensor t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(t.matrix()(1, 0), 4.0);
  EXPECT_EQ(t.matrix(3, 2)(1, 1), 4.0);
  EXPECT_THROW(t.matrix(4, 2), ShapeError);
}

TEST(Tensor, ReshapeKeepsData) {
  Tensor t = Tensor::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor r = t.reshaped({3, 2});
  EXPECT_EQ(r.data(), t.data());
  EXPECT_THROW(t.reshaped({4, 2}), ShapeError);
}

TEST(Numeric, SignOfZeroIsZero) {
  EXPECT_EQ(expadv::sign(0.0), 0.0);
  EXPECT_EQ(expadv::sign(-0.0), 0.0);
  EXPECT_EQ(expadv::sign(1e-300), 1.0);
  EXPECT_EQ(expadv::sign(-3.0), -1.0);
}

TEST(Numeric, SoftmaxSumsToOneAndIsPositive) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 30.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(1 + trial % 17);
    for (double& x : v) x = n(rng);
    const auto p = expadv::softmax(v);
    double total = 0.0;
    for (double x : p) {
      EXPECT_GT(x, 0.0);
      total += x;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Numeric, LogSumExpMatchesDirectFormula) {
  const std::vector<double> v{0.5, -1.0, 2.0};
  EXPECT_NEAR(expadv::log_sum_exp(v), std::log(std::exp(0.5) + std::exp(-1.0) + std::exp(2.0)), 1e-14);
  const std::vector<double> big{1000.0, 1000.0};
  EXPECT_NEAR(expadv::log_sum_exp(big), 1000.0 + std::log(2.0), 1e-12);
}

TEST(Numeric, EntropyOfUniformIsLogN) {
  const std::vector<double> p(8, 0.125);
  EXPECT_NEAR(expadv::entropy(p), std::log(8.0), 1e-14);
  const std::vector<double> point{0.0, 1.0, 0.0};
  EXPECT_EQ(expadv::entropy(point), 0.0);
}
