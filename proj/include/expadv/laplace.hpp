#pragma once

#include <Eigen/Dense>

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace expadv::laplace {

using Index = Eigen::Index;
using Point = Eigen::VectorXd;

/// A closed-form loss over an axis-aligned box in 1 to 3 dimensions.
struct ToyLandscape {
  std::string id;
  Point lower;
  Point upper;
  std::function<double(const Point&)> value;
  /// Per-axis coordinates where the function has a kink; quadrature splits there.
  std::vector<std::vector<double>> kinks;

  int dimension() const { return static_cast<int>(lower.size()); }
  double operator()(const Point& x) const { return value(x); }
  void validate() const;

  /// c - 1/2 (x - center)^T A (x - center) on [-eps, eps]^n.
  static ToyLandscape quadratic(const Eigen::MatrixXd& a, double c = 0.0, double eps = 1.0,
                                const Point& center = Point());
  /// c - 1/2 x^T A x - beta sum x_i^4 on [-eps, eps]^n. Its Laplace ratio
  /// error decays like 3 beta / lambda in one dimension.
  static ToyLandscape quartic(const Eigen::MatrixXd& a, double beta, double c = 0.0, double eps = 1.0);
  /// g^T x + c on [lower, upper].
  static ToyLandscape linear(const Point& g, const Point& lower, const Point& upper, double c = 0.0);
  /// c - 1/2 a (|x_1| - m)^2 - 1/2 b sum_{i>1} x_i^2 + tilt x_1 on [-eps, eps]^n:
  /// two maxima at x_1 = +-m, equal when tilt is zero.
  static ToyLandscape double_bump(int n, double a, double m, double c = 0.0, double b = 1.0, double eps = 1.0,
                                  double tilt = 0.0);
  /// Same function on a caller-chosen box.
  ToyLandscape restricted(const Point& new_lower, const Point& new_upper) const;
};

class WrongCaseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Quadrature {
  double value = 0.0;
  double log_value = 0.0;
  int points_per_axis = 0;
  double relative_change = 0.0;
};

/// Tensor-product composite Simpson of the integral over the box of
/// exp(lambda L). Starts at `grid` points per axis and doubles the number of
/// intervals until two successive results agree to `tolerance` (relative).
Quadrature quadrature(const ToyLandscape& landscape, double lambda, int grid = 101, double tolerance = 1e-6);
inline double quadrature_integral(const ToyLandscape& landscape, double lambda, int grid = 101) {
  return quadrature(landscape, lambda, grid).value;
}

/// Central finite-difference gradient and Hessian.
Point gradient_fd(const ToyLandscape& landscape, const Point& x, double h = 1e-6);
Eigen::MatrixXd hessian_fd(const ToyLandscape& landscape, const Point& x, double h = 1e-4);

/// Global maximizer: dense scan, golden-section sweeps per axis, Newton polish.
Point locate_maximizer(const ToyLandscape& landscape);
/// Refined local maxima of the scan, best first.
std::vector<Point> local_maxima(const ToyLandscape& landscape);

enum class Case { interior, boundary, multi };
std::string_view to_string(Case c);

struct LaplaceEstimate {
  Case kind = Case::interior;
  std::vector<Point> maximizers;
  double max_value = 0.0;
  Eigen::MatrixXd hessian;
  double gradient_norm = 0.0;
  double lambda = 0.0;
  double estimate = 0.0;
  double log_estimate = 0.0;
  double quadrature = 0.0;
  double log_quadrature = 0.0;
  /// quadrature / estimate, computed in log space.
  double ratio = 0.0;
};

/// exp(lambda L*) sqrt((2 pi)^n / (lambda det(-H))) at an interior maximizer.
LaplaceEstimate laplace_interior(const ToyLandscape& landscape, double lambda);
/// exp(lambda L*) / (lambda |L'|) at an endpoint maximizer, n = 1 only.
LaplaceEstimate laplace_boundary(const ToyLandscape& landscape, double lambda);
/// Sum of interior estimates over two equal interior maxima.
LaplaceEstimate laplace_multi(const ToyLandscape& landscape, double lambda);

/// Least-squares slope of log|ratio - 1| against log lambda, negated, so a
/// 1/lambda decay gives 1.
double decay_exponent(std::span<const double> lambdas, std::span<const double> ratios);

/// One-parameter family L(delta; theta) with scalar delta.
struct LandscapeFamily {
  std::string id;
  double delta_lower = -1.0;
  double delta_upper = 1.0;
  double theta_lower = -1.0;
  double theta_upper = 1.0;
  std::function<double(double delta, double theta)> value;

  ToyLandscape at(double theta) const;

  /// -(delta - theta)^2 / 2 + theta^2: both argmins are 0 for every lambda.
  static LandscapeFamily symmetric();
  /// (theta - 0.2)^2 - 1/2 e^{2 theta} (delta - 0.3 theta)^2. The worst case
  /// is minimized at theta = 0.2; the curvature depends on theta, so the
  /// exp-integral minimizer sits near 0.2 + 1/(2 lambda) and approaches it.
  static LandscapeFamily asymmetric();
};

struct TrackingRow {
  double lambda = 0.0;
  double argmin_max = 0.0;
  double argmin_integral = 0.0;
  double distance = 0.0;
};

/// For each lambda, grid-searches theta for the argmin of max_delta L and of
/// (1/lambda) log of the integral of exp(lambda L), then reports the gap.
std::vector<TrackingRow> argmax_tracking_report(const LandscapeFamily& family, std::span<const double> lambdas,
                                                int theta_grid = 2001);

}  // namespace expadv::laplace
