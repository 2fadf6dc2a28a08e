#include "expadv/laplace.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace expadv::laplace;

namespace {

Eigen::MatrixXd mat1(double a) { return Eigen::MatrixXd::Constant(1, 1, a); }

Point pt(std::initializer_list<double> v) {
  Point p(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) p(i++) = x;
  return p;
}

}  // namespace

TEST(Quadrature, ZeroLambdaIsVolume) {
  EXPECT_NEAR(quadrature_integral(ToyLandscape::quadratic(mat1(1.0), 0.0, 0.5), 0.0), 1.0, 1e-10);
  const auto two = ToyLandscape::quadratic(Eigen::Vector2d(1.0, 4.0).asDiagonal().toDenseMatrix(), 0.0, 1.0);
  EXPECT_NEAR(quadrature_integral(two, 0.0), 4.0, 1e-10);
  const auto three = ToyLandscape::quadratic(Eigen::Matrix3d::Identity(), 2.0, 0.3);
  EXPECT_NEAR(quadrature_integral(three, 0.0), std::pow(0.6, 3), 1e-10);
}

TEST(Quadrature, LinearEdgeAntiderivative) {
  const auto land = ToyLandscape::linear(pt({1.0}), pt({0.0}), pt({1.0}));
  const double exact = (std::exp(10.0) - 1.0) / 10.0;
  EXPECT_NEAR(quadrature_integral(land, 10.0) / exact, 1.0, 1e-6);
}

TEST(Quadrature, GaussianErfClosedForm) {
  const double lambda = 100.0;
  const double exact = std::sqrt(2.0 * std::numbers::pi / lambda) * std::erf(std::sqrt(lambda / 2.0));
  const auto q = quadrature(ToyLandscape::quadratic(mat1(1.0)), lambda);
  EXPECT_NEAR(q.value / exact, 1.0, 1e-6);
  EXPECT_LT(q.relative_change, 1e-6);
}

TEST(Quadrature, LogSpaceSurvivesHugeExponents) {
  const auto land = ToyLandscape::linear(pt({2.0}), pt({0.0}), pt({1.0}), 10.0);
  const double lambda = 200.0;
  const auto q = quadrature(land, lambda);
  const double exact_log = lambda * 12.0 - std::log(2.0 * lambda) + std::log1p(-std::exp(-2.0 * lambda));
  EXPECT_NEAR(q.log_value, exact_log, 1e-6);
}

TEST(Quadrature, RejectsCoarseGrid) {
  EXPECT_THROW(quadrature(ToyLandscape::quadratic(mat1(1.0)), 1.0, 51), std::invalid_argument);
}

TEST(Interior, OneDimensionalRatio) {
  const auto r = laplace_interior(ToyLandscape::quadratic(mat1(1.0)), 100.0);
  EXPECT_EQ(r.kind, Case::interior);
  EXPECT_NEAR(r.ratio, 1.0, 1e-3);
  EXPECT_NEAR(r.maximizers.at(0)(0), 0.0, 1e-6);
}

TEST(Interior, TwoDimensionalDiagonal) {
  const double lambda = 200.0, c = 0.3;
  const auto land = ToyLandscape::quadratic(Eigen::Vector2d(1.0, 4.0).asDiagonal().toDenseMatrix(), c);
  const auto r = laplace_interior(land, lambda);
  EXPECT_NEAR(r.estimate / (std::exp(lambda * c) * 2.0 * std::numbers::pi / (lambda * 2.0)), 1.0, 1e-6);
  EXPECT_NEAR(r.ratio, 1.0, 1e-3);
}

TEST(Interior, ConvergesMonotonically) {
  const auto land = ToyLandscape::quartic(mat1(1.0), 0.1);
  double previous = std::numeric_limits<double>::infinity();
  for (double lambda : {10.0, 25.0, 100.0, 400.0}) {
    const double gap = std::abs(laplace_interior(land, lambda).ratio - 1.0);
    EXPECT_LT(gap, previous) << lambda;
    previous = gap;
  }
  const auto q = ToyLandscape::quadratic(mat1(1.0));
  EXPECT_GT(std::abs(laplace_interior(q, 10.0).ratio - 1.0), std::abs(laplace_interior(q, 100.0).ratio - 1.0));
}

TEST(Interior, OffCenterAndThreeDimensional) {
  Eigen::Matrix3d a;
  a << 2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 3.0;
  const auto land = ToyLandscape::quadratic(a, 0.0, 1.0, Eigen::Vector3d(0.2, -0.1, 0.1));
  const auto r = laplace_interior(land, 150.0);
  EXPECT_LT((r.maximizers[0] - Eigen::Vector3d(0.2, -0.1, 0.1)).norm(), 1e-6);
  EXPECT_NEAR(r.ratio, 1.0, 1e-3);
}

TEST(Interior, RefusesBoundaryMaximum) {
  const auto land = ToyLandscape::linear(pt({1.0}), pt({0.0}), pt({1.0}));
  EXPECT_THROW(laplace_interior(land, 10.0), WrongCaseError);
  const auto shifted = ToyLandscape::quadratic(mat1(1.0), 0.0, 1.0, pt({0.99}));
  EXPECT_THROW(laplace_interior(shifted, 10.0), WrongCaseError);
}

TEST(Boundary, UnitSlopeMatchesAnalyticRatio) {
  const double lambda = 10.0;
  const auto r = laplace_boundary(ToyLandscape::linear(pt({1.0}), pt({0.0}), pt({1.0})), lambda);
  EXPECT_EQ(r.kind, Case::boundary);
  EXPECT_NEAR(r.ratio, 1.0 - std::exp(-lambda), 1e-6);
  EXPECT_NEAR(r.ratio, 1.0, 1e-4);
}

TEST(Boundary, SlopeTwo) {
  const double lambda = 50.0;
  const auto r = laplace_boundary(ToyLandscape::linear(pt({2.0}), pt({0.0}), pt({1.0})), lambda);
  EXPECT_NEAR(r.log_estimate, 100.0 - std::log(100.0), 1e-8);
  EXPECT_NEAR(r.ratio, 1.0, 1e-4);
}

TEST(Boundary, LowerEndpointAndWrongCases) {
  const auto falling = ToyLandscape::linear(pt({-1.5}), pt({-1.0}), pt({1.0}));
  EXPECT_NEAR(laplace_boundary(falling, 40.0).ratio, 1.0, 1e-4);
  EXPECT_THROW(laplace_boundary(ToyLandscape::linear(pt({0.0}), pt({0.0}), pt({1.0})), 10.0), WrongCaseError);
  EXPECT_THROW(laplace_boundary(ToyLandscape::quadratic(mat1(1.0)), 10.0), WrongCaseError);
  EXPECT_THROW(laplace_boundary(ToyLandscape::linear(pt({1.0, 1.0}), pt({0.0, 0.0}), pt({1.0, 1.0})), 10.0),
               WrongCaseError);
}

TEST(Multi, SymmetricDoubleBump) {
  const auto land = ToyLandscape::double_bump(1, 1.0, 0.5);
  const auto r = laplace_multi(land, 200.0);
  EXPECT_EQ(r.kind, Case::multi);
  ASSERT_EQ(r.maximizers.size(), 2u);
  const double single = std::sqrt(2.0 * std::numbers::pi / 200.0);
  EXPECT_NEAR(r.estimate / (2.0 * single), 1.0, 1e-6);
  EXPECT_NEAR(r.ratio, 1.0, 1e-3);
}

TEST(Multi, HalfDomainMatchesSingleBump) {
  const auto land = ToyLandscape::double_bump(2, 1.0, 0.5, 0.0, 2.0);
  const auto half = land.restricted(pt({0.0, -1.0}), pt({1.0, 1.0}));
  const auto r = laplace_interior(half, 200.0);
  EXPECT_NEAR(r.ratio, 1.0, 1e-3);
  EXPECT_NEAR(laplace_multi(land, 200.0).ratio, 1.0, 1e-3);
}

TEST(Multi, DegenerateAtTinyLambdaAndRefusesUnequalPeaks) {
  const auto land = ToyLandscape::double_bump(1, 1.0, 0.5);
  EXPECT_GT(std::abs(laplace_multi(land, 1e-3).ratio - 1.0), 0.5);
  const auto tilted = ToyLandscape::double_bump(1, 1.0, 0.5, 0.0, 1.0, 1.0, 0.01);
  EXPECT_THROW(laplace_multi(tilted, 50.0), WrongCaseError);
  EXPECT_THROW(laplace_multi(ToyLandscape::quadratic(mat1(1.0)), 50.0), WrongCaseError);
}

TEST(Hessian, SymmetricAndAnalytic) {
  Eigen::Matrix3d a;
  a << 3.0, 1.0, 0.5, 1.0, 2.0, -0.3, 0.5, -0.3, 1.5;
  const auto land = ToyLandscape::quadratic(a, 1.0);
  const auto h = hessian_fd(land, Eigen::Vector3d(0.1, -0.2, 0.3));
  EXPECT_LT((h - h.transpose()).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((h + a).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_LT((gradient_fd(land, Eigen::Vector3d::Zero())).norm(), 1e-8);
}

TEST(Decay, ExponentOfSyntheticAndQuarticSeries) {
  const std::vector<double> lambdas{25.0, 50.0, 100.0, 200.0};
  std::vector<double> synthetic;
  for (double l : lambdas) synthetic.push_back(1.0 + 0.7 / l);
  EXPECT_NEAR(decay_exponent(lambdas, synthetic), 1.0, 1e-12);

  const auto land = ToyLandscape::quartic(mat1(1.0), 0.1);
  std::vector<double> ratios;
  for (double l : lambdas) ratios.push_back(laplace_interior(land, l).ratio);
  const double p = decay_exponent(lambdas, ratios);
  EXPECT_GE(p, 0.8);
  EXPECT_LE(p, 1.2);
  EXPECT_NEAR((1.0 - ratios.back()) * lambdas.back(), 0.3, 0.05);
}

TEST(Tracking, SymmetricFamilyCoincides) {
  const std::vector<double> lambdas{1.0, 10.0, 100.0};
  for (const auto& row : argmax_tracking_report(LandscapeFamily::symmetric(), lambdas, 401)) {
    EXPECT_NEAR(row.argmin_max, 0.0, 1e-6);
    EXPECT_NEAR(row.distance, 0.0, 1e-6);
  }
}

TEST(Tracking, AsymmetricFamilyConverges) {
  const std::vector<double> lambdas{1.0, 10.0, 100.0};
  const auto rows = argmax_tracking_report(LandscapeFamily::asymmetric(), lambdas);
  ASSERT_EQ(rows.size(), 3u);
  for (const auto& row : rows) EXPECT_NEAR(row.argmin_max, 0.2, 1e-4);
  EXPECT_GE(rows[0].distance, rows[1].distance);
  EXPECT_GE(rows[1].distance, rows[2].distance);
  EXPECT_LT(rows[2].distance, rows[0].distance);
  EXPECT_LT(rows[2].distance, 0.01);
  EXPECT_NEAR(rows[2].distance * 100.0, 0.5, 0.1);
}
