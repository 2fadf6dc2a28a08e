#include "expadv/dct.hpp"

namespace expadv::dct {

namespace {

constexpr Index kSide = 28;

const Eigen::MatrixXd& basis28() {
  static const Eigen::MatrixXd c = basis<double>(kSide);
  return c;
}

template <typename Transform>
Tensor per_plane(const Tensor& planes, std::string_view op, Transform transform) {
  const Shape& s = planes.shape();
  if (s.size() < 2 || s[s.size() - 1] != kSide || s[s.size() - 2] != kSide) {
    throw ShapeError(op, "expects trailing 28x28 planes, got " + shape_str(s));
  }
  Tensor out(s);
  const Index count = planes.size() / (kSide * kSide);
  for (Index p = 0; p < count; ++p) {
    Eigen::Map<const RowMatrix<double>> in(planes.raw() + p * kSide * kSide, kSide, kSide);
    Eigen::Map<RowMatrix<double>> dst(out.raw() + p * kSide * kSide, kSide, kSide);
    dst.noalias() = transform(in);
  }
  return out;
}

}  // namespace

Tensor dct2(const Tensor& planes) {
  const auto& c = basis28();
  return per_plane(planes, "dct2", [&](const auto& x) { return RowMatrix<double>(c * x * c.transpose()); });
}

Tensor idct2(const Tensor& planes) {
  const auto& c = basis28();
  return per_plane(planes, "idct2", [&](const auto& x) { return RowMatrix<double>(c.transpose() * x * c); });
}

}  // namespace expadv::dct
