#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace expadv {

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ']';
  return out.str();
}

/// Raised when an operation receives operands whose shapes do not fit together.
class ShapeError : public std::invalid_argument {
 public:
  ShapeError(std::string_view op, const std::string& detail)
      : std::invalid_argument(std::string(op) + ": " + detail), op_(op) {}
  const std::string& op() const noexcept { return op_; }

 private:
  std::string op_;
};

/// Dense row-major n-dimensional array. Storage is a contiguous Eigen vector so
/// any 2-D slab can be viewed as an Eigen matrix without copying.
template <typename Scalar>
class BasicTensor {
 public:
  using Storage = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using MatrixMap = Eigen::Map<RowMatrix<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix<Scalar>>;

  BasicTensor() : shape_{0}, data_() {}

  explicit BasicTensor(Shape shape) : shape_(std::move(shape)) {
    validate_shape(shape_);
    data_ = Storage::Zero(numel(shape_));
  }

  BasicTensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    validate_shape(shape_);
    if (numel(shape_) != data_.size()) {
      throw ShapeError("tensor", "shape " + shape_str(shape_) + " needs " +
                                     std::to_string(numel(shape_)) + " values, got " +
                                     std::to_string(data_.size()));
    }
  }

  /// Construction from external data: rejects NaN and infinities.
  static BasicTensor from_values(Shape shape, std::span<const Scalar> values) {
    Storage data(static_cast<Index>(values.size()));
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) {
        throw std::invalid_argument("tensor: non-finite value at flat index " + std::to_string(i));
      }
      data[static_cast<Index>(i)] = values[i];
    }
    return BasicTensor(std::move(shape), std::move(data));
  }

  static BasicTensor from_values(Shape shape, std::initializer_list<Scalar> values) {
    return from_values(std::move(shape), std::span<const Scalar>(values.begin(), values.size()));
  }

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }

  static BasicTensor filled(Shape shape, Scalar value) {
    BasicTensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static BasicTensor scalar(Scalar value) { return filled({}, value); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  Index dim(std::size_t axis) const { return shape_.at(axis); }
  Index size() const noexcept { return data_.size(); }

  Storage& data() noexcept { return data_; }
  const Storage& data() const noexcept { return data_; }
  Scalar* raw() noexcept { return data_.data(); }
  const Scalar* raw() const noexcept { return data_.data(); }
  std::span<Scalar> values() noexcept { return {data_.data(), static_cast<std::size_t>(data_.size())}; }
  std::span<const Scalar> values() const noexcept {
    return {data_.data(), static_cast<std::size_t>(data_.size())};
  }

  Scalar& operator[](Index i) { return data_[i]; }
  Scalar operator[](Index i) const { return data_[i]; }

  Scalar item() const {
    if (data_.size() != 1) throw ShapeError("item", "tensor of shape " + shape_str(shape_) + " is not a scalar");
    return data_[0];
  }

  /// Views the tensor as a rows x cols row-major matrix; rows*cols must equal size().
  MatrixMap matrix(Index rows, Index cols) {
    check_matrix(rows, cols);
    return MatrixMap(data_.data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    check_matrix(rows, cols);
    return ConstMatrixMap(data_.data(), rows, cols);
  }
  /// Leading dimension as rows, everything else flattened into columns.
  MatrixMap matrix() { return matrix(leading(), size() / std::max<Index>(leading(), 1)); }
  ConstMatrixMap matrix() const { return matrix(leading(), size() / std::max<Index>(leading(), 1)); }

  BasicTensor reshaped(Shape shape) const {
    if (numel(shape) != size()) {
      throw ShapeError("reshape", "cannot view " + shape_str(shape_) + " as " + shape_str(shape));
    }
    return BasicTensor(std::move(shape), data_);
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static void validate_shape(const Shape& shape) {
    for (Index d : shape) {
      if (d <= 0) throw ShapeError("tensor", "non-positive dimension in " + shape_str(shape));
    }
  }
  Index leading() const { return shape_.empty() ? 1 : shape_[0]; }
  void check_matrix(Index rows, Index cols) const {
    if (rows * cols != size()) {
      throw ShapeError("matrix", "cannot view " + shape_str(shape_) + " as " + std::to_string(rows) + "x" +
                                     std::to_string(cols));
    }
  }

  Shape shape_;
  Storage data_;
};

using Tensor = BasicTensor<double>;

template <typename Scalar>
Scalar max_abs_difference(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_difference", shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  if (a.size() == 0) return Scalar(0);
  return (a.data() - b.data()).cwiseAbs().maxCoeff();
}

}  // namespace expadv
