#pragma once

#include "expadv/tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace expadv::dct {

/// Orthonormal DCT-II basis: C(k, n) = a_k cos(pi (2n + 1) k / 2N), with
/// a_0 = sqrt(1/N) and a_k = sqrt(2/N) otherwise. C is orthogonal.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> basis(Index n) {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> c(n, n);
  const Scalar size = static_cast<Scalar>(n);
  for (Index k = 0; k < n; ++k) {
    const Scalar a = k == 0 ? std::sqrt(Scalar(1) / size) : std::sqrt(Scalar(2) / size);
    for (Index i = 0; i < n; ++i) {
      c(k, i) = a * std::cos(std::numbers::pi_v<Scalar> * (Scalar(2) * static_cast<Scalar>(i) + Scalar(1)) *
                             static_cast<Scalar>(k) / (Scalar(2) * size));
    }
  }
  return c;
}

/// 2-D orthonormal DCT-II of a square plane: C X C^T.
template <typename Derived>
auto dct2(const Eigen::MatrixBase<Derived>& plane) {
  using Scalar = typename Derived::Scalar;
  if (plane.rows() != plane.cols()) throw ShapeError("dct2", "plane must be square");
  const auto c = basis<Scalar>(plane.rows());
  return Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>(c * plane * c.transpose());
}

/// Inverse of dct2: C^T Y C.
template <typename Derived>
auto idct2(const Eigen::MatrixBase<Derived>& coefficients) {
  using Scalar = typename Derived::Scalar;
  if (coefficients.rows() != coefficients.cols()) throw ShapeError("idct2", "plane must be square");
  const auto c = basis<Scalar>(coefficients.rows());
  return Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>(c.transpose() * coefficients * c);
}

/// Tensor front-ends: [28,28] planes, or [..., 28, 28] stacks transformed plane by plane.
Tensor dct2(const Tensor& planes);
Tensor idct2(const Tensor& planes);

}  // namespace expadv::dct
