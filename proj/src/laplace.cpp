#include "expadv/laplace.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace expadv::laplace {

namespace {

constexpr double kGolden = 0.6180339887498949;
constexpr double kMaxPoints = 1 << 25;

struct AxisRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Composite Simpson on [lo, hi] with `intervals` total intervals, split at the
// kinks so that every segment is smooth.
AxisRule simpson_axis(double lo, double hi, const std::vector<double>& kinks, long intervals) {
  std::vector<double> cuts{lo};
  for (double k : kinks) {
    if (k > lo && k < hi) cuts.push_back(k);
  }
  cuts.push_back(hi);
  std::sort(cuts.begin(), cuts.end());

  AxisRule rule;
  const double total = hi - lo;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double a = cuts[s], b = cuts[s + 1];
    long m = 2 * std::lround(static_cast<double>(intervals) * (b - a) / (2.0 * total));
    m = std::max<long>(m, 2);
    const double h = (b - a) / static_cast<double>(m);
    for (long i = 0; i <= m; ++i) {
      const double w = h / 3.0 * ((i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0));
      if (i == 0 && !rule.nodes.empty()) {
        rule.weights.back() += w;
        continue;
      }
      rule.nodes.push_back(i == m ? b : a + h * static_cast<double>(i));
      rule.weights.push_back(w);
    }
  }
  return rule;
}

// log of sum_i w_i exp(lambda L(x_i)) over the tensor-product grid.
double log_simpson(const ToyLandscape& f, double lambda, long intervals) {
  const int n = f.dimension();
  std::vector<AxisRule> rules;
  for (int d = 0; d < n; ++d) {
    const auto& kinks = d < static_cast<int>(f.kinks.size()) ? f.kinks[static_cast<std::size_t>(d)]
                                                              : std::vector<double>{};
    rules.push_back(simpson_axis(f.lower[d], f.upper[d], kinks, intervals));
  }
  std::vector<std::size_t> idx(static_cast<std::size_t>(n), 0);
  Point x(n);
  double top = -std::numeric_limits<double>::infinity();
  double acc = 0.0;
  while (true) {
    double w = 1.0;
    for (int d = 0; d < n; ++d) {
      x[d] = rules[static_cast<std::size_t>(d)].nodes[idx[static_cast<std::size_t>(d)]];
      w *= rules[static_cast<std::size_t>(d)].weights[idx[static_cast<std::size_t>(d)]];
    }
    const double e = lambda * f(x);
    if (e > top) {
      acc = acc * std::exp(top - e) + w;
      top = e;
    } else {
      acc += w * std::exp(e - top);
    }
    int d = 0;
    for (; d < n; ++d) {
      auto& i = idx[static_cast<std::size_t>(d)];
      if (++i < rules[static_cast<std::size_t>(d)].nodes.size()) break;
      i = 0;
    }
    if (d == n) break;
  }
  return top + std::log(acc);
}

double golden_max(const std::function<double(double)>& g, double a, double b) {
  double c = b - kGolden * (b - a), d = a + kGolden * (b - a);
  double gc = g(c), gd = g(d);
  for (int it = 0; it < 200 && b - a > 1e-13 * (1.0 + std::abs(a) + std::abs(b)); ++it) {
    if (gc >= gd) {
      b = d;
      d = c;
      gd = gc;
      c = b - kGolden * (b - a);
      gc = g(c);
    } else {
      a = c;
      c = d;
      gc = gd;
      d = a + kGolden * (b - a);
      gd = g(d);
    }
  }
  return 0.5 * (a + b);
}

bool inside(const ToyLandscape& f, const Point& x) {
  return (x.array() >= f.lower.array()).all() && (x.array() <= f.upper.array()).all();
}

Point refine(const ToyLandscape& f, Point x, const Point& cell) {
  for (int sweep = 0; sweep < 50; ++sweep) {
    const Point before = x;
    for (int d = 0; d < f.dimension(); ++d) {
      const double lo = std::max(f.lower[d], x[d] - cell[d]);
      const double hi = std::min(f.upper[d], x[d] + cell[d]);
      Point probe = x;
      const double best = golden_max(
          [&](double t) {
            probe[d] = t;
            return f(probe);
          },
          lo, hi);
      probe[d] = best;
      // Endpoints are candidates too; golden section never evaluates them.
      for (double edge : {lo, hi}) {
        Point e = x;
        e[d] = edge;
        if (f(e) > f(probe)) probe = e;
      }
      if (f(probe) >= f(x)) x = probe;
    }
    if ((x - before).norm() < 1e-14) break;
  }
  for (int it = 0; it < 20; ++it) {
    const Point g = gradient_fd(f, x);
    const Eigen::MatrixXd h = hessian_fd(f, x);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(-h);
    if (ldlt.info() != Eigen::Success) break;
    const Point next = x + ldlt.solve(g);
    if (!next.allFinite() || !inside(f, next) || f(next) < f(x) - 1e-15 * (1.0 + std::abs(f(x)))) break;
    const bool done = (next - x).norm() < 1e-15;
    x = next;
    if (done) break;
  }
  return x;
}

int scan_points(int n) { return n == 1 ? 2001 : (n == 2 ? 201 : 61); }

struct Scan {
  std::vector<Point> local;
  Point cell;
};

Scan scan(const ToyLandscape& f) {
  const int n = f.dimension();
  const int m = scan_points(n);
  Scan out;
  out.cell = (f.upper - f.lower) / static_cast<double>(m - 1);
  std::vector<double> values(static_cast<std::size_t>(std::pow(m, n)));
  auto coord = [&](std::size_t flat) {
    Point x(n);
    for (int d = 0; d < n; ++d) {
      x[d] = f.lower[d] + out.cell[d] * static_cast<double>(flat % static_cast<std::size_t>(m));
      flat /= static_cast<std::size_t>(m);
    }
    return x;
  };
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = f(coord(i));
  for (std::size_t i = 0; i < values.size(); ++i) {
    bool is_max = true;
    std::size_t stride = 1;
    for (int d = 0; d < n && is_max; ++d) {
      const auto pos = (i / stride) % static_cast<std::size_t>(m);
      if (pos > 0 && values[i - stride] > values[i]) is_max = false;
      if (pos + 1 < static_cast<std::size_t>(m) && values[i + stride] > values[i]) is_max = false;
      // Plateaus: keep only the first point of a run of equal values.
      if (pos > 0 && values[i - stride] == values[i]) is_max = false;
      stride *= static_cast<std::size_t>(m);
    }
    if (is_max) out.local.push_back(coord(i));
  }
  return out;
}

double boundary_gap(const ToyLandscape& f, const Point& x, int d) {
  return std::min(x[d] - f.lower[d], f.upper[d] - x[d]);
}

void check_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("laplace: lambda must be >= 0");
}

// Interior estimate at one maximizer; throws WrongCaseError when the
// preconditions fail.
LaplaceEstimate interior_at(const ToyLandscape& f, const Point& x, double lambda) {
  const int n = f.dimension();
  LaplaceEstimate est;
  est.kind = Case::interior;
  est.maximizers = {x};
  est.max_value = f(x);
  est.lambda = lambda;
  for (int d = 0; d < n; ++d) {
    const double half = 0.5 * (f.upper[d] - f.lower[d]);
    if (boundary_gap(f, x, d) <= 0.05 * half) {
      throw WrongCaseError("laplace_interior: maximizer on or near the boundary along axis " + std::to_string(d));
    }
  }
  est.gradient_norm = gradient_fd(f, x).norm();
  if (est.gradient_norm >= 1e-8) {
    throw WrongCaseError("laplace_interior: gradient norm " + std::to_string(est.gradient_norm) +
                         " at the maximizer is not below 1e-8");
  }
  est.hessian = hessian_fd(f, x);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(-est.hessian, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() <= 0.0) {
    throw WrongCaseError("laplace_interior: -H is not positive definite");
  }
  const double log_det = eig.eigenvalues().array().log().sum();
  est.log_estimate = lambda * est.max_value +
                     0.5 * (n * std::log(2.0 * std::numbers::pi) - n * std::log(lambda) - log_det);
  est.estimate = std::exp(est.log_estimate);
  return est;
}

void attach_quadrature(LaplaceEstimate& est, const ToyLandscape& f) {
  const Quadrature q = quadrature(f, est.lambda);
  est.quadrature = q.value;
  est.log_quadrature = q.log_value;
  est.ratio = std::exp(q.log_value - est.log_estimate);
}

}  // namespace

void ToyLandscape::validate() const {
  const int n = dimension();
  if (n < 1 || n > 3) throw std::invalid_argument("landscape: dimension must be 1, 2 or 3");
  if (upper.size() != n) throw std::invalid_argument("landscape: box bounds differ in dimension");
  if (!((upper.array() > lower.array()).all())) throw std::invalid_argument("landscape: empty box");
  if (!value) throw std::invalid_argument("landscape: no function");
}

ToyLandscape ToyLandscape::quadratic(const Eigen::MatrixXd& a, double c, double eps, const Point& center) {
  const Index n = a.rows();
  if (a.cols() != n || !a.isApprox(a.transpose())) throw std::invalid_argument("quadratic: A must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(a, Eigen::EigenvaluesOnly);
  if (eig.eigenvalues().minCoeff() <= 0.0) throw std::invalid_argument("quadratic: A must be positive definite");
  const Point mid = center.size() == 0 ? Point::Zero(n) : center;
  ToyLandscape f{"quadratic", Point::Constant(n, -eps), Point::Constant(n, eps),
                 [a, c, mid](const Point& x) {
                   const Point d = x - mid;
                   return c - 0.5 * d.dot(a * d);
                 },
                 {}};
  f.validate();
  return f;
}

ToyLandscape ToyLandscape::quartic(const Eigen::MatrixXd& a, double beta, double c, double eps) {
  ToyLandscape f = quadratic(a, c, eps);
  f.id = "quartic";
  f.value = [a, beta, c](const Point& x) { return c - 0.5 * x.dot(a * x) - beta * x.array().pow(4).sum(); };
  return f;
}

ToyLandscape ToyLandscape::linear(const Point& g, const Point& lower, const Point& upper, double c) {
  ToyLandscape f{"linear", lower, upper, [g, c](const Point& x) { return g.dot(x) + c; }, {}};
  f.validate();
  return f;
}

ToyLandscape ToyLandscape::double_bump(int n, double a, double m, double c, double b, double eps, double tilt) {
  ToyLandscape f{"double_bump", Point::Constant(n, -eps), Point::Constant(n, eps),
                 [a, m, c, b, tilt](const Point& x) {
                   const double r = std::abs(x[0]) - m;
                   return c - 0.5 * a * r * r - 0.5 * b * x.tail(x.size() - 1).squaredNorm() + tilt * x[0];
                 },
                 {{0.0}}};
  f.validate();
  return f;
}

ToyLandscape ToyLandscape::restricted(const Point& new_lower, const Point& new_upper) const {
  ToyLandscape f = *this;
  f.lower = new_lower;
  f.upper = new_upper;
  f.validate();
  return f;
}

Quadrature quadrature(const ToyLandscape& landscape, double lambda, int grid, double tolerance) {
  landscape.validate();
  check_lambda(lambda);
  if (grid < 101) throw std::invalid_argument("quadrature: at least 101 points per axis");
  const int n = landscape.dimension();
  long intervals = grid - 1 + (grid - 1) % 2;
  double previous = log_simpson(landscape, lambda, intervals);
  while (true) {
    intervals *= 2;
    if (std::pow(static_cast<double>(intervals + 1), n) > kMaxPoints) {
      throw QuadratureError("quadrature: no convergence to " + std::to_string(tolerance) + " before " +
                            std::to_string(intervals / 2 + 1) + " points per axis");
    }
    const double current = log_simpson(landscape, lambda, intervals);
    const double change = std::abs(std::expm1(current - previous));
    if (change < tolerance) {
      return {std::exp(current), current, static_cast<int>(intervals + 1), change};
    }
    previous = current;
  }
}

Point gradient_fd(const ToyLandscape& f, const Point& x, double h) {
  Point g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Point p = x, m = x;
    p[i] += h;
    m[i] -= h;
    g[i] = (f(p) - f(m)) / (2.0 * h);
  }
  return g;
}

Eigen::MatrixXd hessian_fd(const ToyLandscape& f, const Point& x, double h) {
  const Index n = x.size();
  Eigen::MatrixXd hess(n, n);
  const double f0 = f(x);
  auto at = [&](Index i, double di, Index j, double dj) {
    Point p = x;
    p[i] += di;
    p[j] += dj;
    return f(p);
  };
  for (Index i = 0; i < n; ++i) {
    hess(i, i) = (at(i, h, i, 0) - 2.0 * f0 + at(i, -h, i, 0)) / (h * h);
    for (Index j = 0; j < i; ++j) {
      hess(i, j) = hess(j, i) =
          (at(i, h, j, h) - at(i, h, j, -h) - at(i, -h, j, h) + at(i, -h, j, -h)) / (4.0 * h * h);
    }
  }
  return hess;
}

std::vector<Point> local_maxima(const ToyLandscape& landscape) {
  landscape.validate();
  const Scan s = scan(landscape);
  std::vector<Point> out;
  for (const Point& x0 : s.local) {
    const Point x = refine(landscape, x0, s.cell);
    const bool seen = std::any_of(out.begin(), out.end(), [&](const Point& y) { return (x - y).norm() < 1e-6; });
    if (!seen) out.push_back(x);
  }
  std::sort(out.begin(), out.end(), [&](const Point& a, const Point& b) { return landscape(a) > landscape(b); });
  return out;
}

Point locate_maximizer(const ToyLandscape& landscape) {
  const auto maxima = local_maxima(landscape);
  if (maxima.empty()) throw std::runtime_error("laplace: no maximizer found");
  return maxima.front();
}

std::string_view to_string(Case c) {
  switch (c) {
    case Case::interior: return "interior";
    case Case::boundary: return "boundary";
    case Case::multi: return "multi";
  }
  return "?";
}

LaplaceEstimate laplace_interior(const ToyLandscape& landscape, double lambda) {
  check_lambda(lambda);
  LaplaceEstimate est = interior_at(landscape, locate_maximizer(landscape), lambda);
  attach_quadrature(est, landscape);
  return est;
}

LaplaceEstimate laplace_boundary(const ToyLandscape& landscape, double lambda) {
  check_lambda(lambda);
  if (landscape.dimension() != 1) throw WrongCaseError("laplace_boundary: only n = 1 is supported");
  const Point x = locate_maximizer(landscape);
  const double lo = landscape.lower[0], hi = landscape.upper[0];
  const double gap = boundary_gap(landscape, x, 0);
  if (gap > 1e-9 * (hi - lo)) throw WrongCaseError("laplace_boundary: maximizer is interior");

  // Second-order one-sided difference pointing into the box.
  const double h = 1e-6 * (hi - lo);
  const double inward = (x[0] - lo) < (hi - x[0]) ? 1.0 : -1.0;
  auto f = [&](double t) { return landscape(Point::Constant(1, t)); };
  const double edge = inward > 0 ? lo : hi;
  const double slope = (-3.0 * f(edge) + 4.0 * f(edge + inward * h) - f(edge + 2.0 * inward * h)) / (2.0 * h);
  if (std::abs(slope) < 1e-8) throw WrongCaseError("laplace_boundary: zero slope at the boundary maximizer");

  LaplaceEstimate est;
  est.kind = Case::boundary;
  est.maximizers = {Point::Constant(1, edge)};
  est.max_value = f(edge);
  est.gradient_norm = std::abs(slope);
  est.hessian = hessian_fd(landscape, Point::Constant(1, edge + 2e-4 * inward));
  est.lambda = lambda;
  est.log_estimate = lambda * est.max_value - std::log(lambda * std::abs(slope));
  est.estimate = std::exp(est.log_estimate);
  attach_quadrature(est, landscape);
  return est;
}

LaplaceEstimate laplace_multi(const ToyLandscape& landscape, double lambda) {
  check_lambda(lambda);
  const auto maxima = local_maxima(landscape);
  if (maxima.size() < 2) throw WrongCaseError("laplace_multi: fewer than two maxima");
  const double top = landscape(maxima[0]), second = landscape(maxima[1]);
  if (std::abs(top - second) > 1e-10) {
    throw WrongCaseError("laplace_multi: maxima differ by " + std::to_string(std::abs(top - second)));
  }
  LaplaceEstimate first = interior_at(landscape, maxima[0], lambda);
  const LaplaceEstimate other = interior_at(landscape, maxima[1], lambda);
  first.kind = Case::multi;
  first.maximizers.push_back(maxima[1]);
  const double hi = std::max(first.log_estimate, other.log_estimate);
  first.log_estimate = hi + std::log(std::exp(first.log_estimate - hi) + std::exp(other.log_estimate - hi));
  first.estimate = std::exp(first.log_estimate);
  attach_quadrature(first, landscape);
  return first;
}

double decay_exponent(std::span<const double> lambdas, std::span<const double> ratios) {
  if (lambdas.size() != ratios.size() || lambdas.size() < 2) {
    throw std::invalid_argument("decay_exponent: need at least two matching points");
  }
  Eigen::MatrixXd design(static_cast<Index>(lambdas.size()), 2);
  Eigen::VectorXd target(static_cast<Index>(lambdas.size()));
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    design(static_cast<Index>(i), 0) = 1.0;
    design(static_cast<Index>(i), 1) = std::log(lambdas[i]);
    target[static_cast<Index>(i)] = std::log(std::abs(ratios[i] - 1.0));
  }
  const Eigen::Vector2d coef = design.colPivHouseholderQr().solve(target);
  return -coef[1];
}

ToyLandscape LandscapeFamily::at(double theta) const {
  auto fn = value;
  return ToyLandscape{id, Point::Constant(1, delta_lower), Point::Constant(1, delta_upper),
                      [fn, theta](const Point& x) { return fn(x[0], theta); }, {}};
}

LandscapeFamily LandscapeFamily::symmetric() {
  return {"symmetric", -1.0, 1.0, -1.0, 1.0,
          [](double d, double t) { return -0.5 * (d - t) * (d - t) + t * t; }};
}

LandscapeFamily LandscapeFamily::asymmetric() {
  return {"asymmetric", -1.0, 1.0, -1.0, 1.0, [](double d, double t) {
            const double r = d - 0.3 * t;
            return (t - 0.2) * (t - 0.2) - 0.5 * std::exp(2.0 * t) * r * r;
          }};
}

std::vector<TrackingRow> argmax_tracking_report(const LandscapeFamily& family, std::span<const double> lambdas,
                                                int theta_grid) {
  if (theta_grid < 3) throw std::invalid_argument("argmax_tracking_report: theta grid too small");
  const double step = (family.theta_upper - family.theta_lower) / static_cast<double>(theta_grid - 1);

  auto argmin = [&](const std::function<double(double)>& objective) {
    double best_t = family.theta_lower, best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < theta_grid; ++i) {
      const double t = family.theta_lower + step * i;
      const double v = objective(t);
      if (v < best) {
        best = v;
        best_t = t;
      }
    }
    const double lo = std::max(family.theta_lower, best_t - step);
    const double hi = std::min(family.theta_upper, best_t + step);
    return golden_max([&](double t) { return -objective(t); }, lo, hi);
  };

  const double worst_case =
      argmin([&](double t) { return family.at(t)(locate_maximizer(family.at(t))); });
  std::vector<TrackingRow> rows;
  for (double lambda : lambdas) {
    if (!(lambda > 0.0)) throw std::invalid_argument("argmax_tracking_report: lambda must be > 0");
    const double smooth = argmin([&](double t) { return quadrature(family.at(t), lambda, 101, 1e-10).log_value / lambda; });
    rows.push_back({lambda, worst_case, smooth, std::abs(smooth - worst_case)});
  }
  return rows;
}

}  // namespace expadv::laplace
