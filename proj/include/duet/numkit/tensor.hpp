#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <sstream>
#include <utility>
#include <vector>

#include "duet/error.hpp"

namespace duet {

template <typename Scalar>
using RowMatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrix = RowMatrixX<double>;
using Vector = VectorX<double>;
using RowVector = RowVectorX<double>;

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

/// Dense row-major tensor. Rank-N data is viewed as a matrix of
/// shape [dim(0), product of the remaining dims]; rank-1 data as a row.
template <typename Scalar>
class BasicTensor {
 public:
  using MatrixMap = Eigen::Map<RowMatrixX<Scalar>>;
  using ConstMatrixMap = Eigen::Map<const RowMatrixX<Scalar>>;
  using RowMap = Eigen::Map<RowVectorX<Scalar>>;
  using ConstRowMap = Eigen::Map<const RowVectorX<Scalar>>;

  /// Over-aligned so vectorised reductions split work the same way on every
  /// allocation; plain vectors would make results depend on heap addresses.
  using Storage = std::vector<Scalar, Eigen::aligned_allocator<Scalar>>;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), Scalar(0)) {}

  BasicTensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
      throw DimensionError("tensor shape " + shape_string(shape_) + " does not match " +
                           std::to_string(data_.size()) + " values");
    }
  }

  template <typename Derived>
  static BasicTensor from_matrix(const Eigen::MatrixBase<Derived>& m) {
    BasicTensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    t.matrix() = m;
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  Scalar* data() noexcept { return data_.data(); }
  const Scalar* data() const noexcept { return data_.data(); }
  Storage& values() noexcept { return data_; }
  const Storage& values() const noexcept { return data_; }

  Scalar& operator[](std::size_t i) { return data_[i]; }
  const Scalar& operator[](std::size_t i) const { return data_[i]; }

  Eigen::Index rows() const { return shape_.empty() ? 1 : (shape_.size() == 1 ? 1 : Eigen::Index(shape_[0])); }
  Eigen::Index cols() const { return rows() == 0 ? 0 : Eigen::Index(data_.size()) / rows(); }

  MatrixMap matrix() { return MatrixMap(data_.data(), rows(), cols()); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(data_.data(), rows(), cols()); }

  /// Flat view of all entries as a row vector.
  RowMap row_vector() { return RowMap(data_.data(), Eigen::Index(data_.size())); }
  ConstRowMap row_vector() const { return ConstRowMap(data_.data(), Eigen::Index(data_.size())); }

  /// Row `i` of the matrix view.
  RowMap row(std::size_t i) { return RowMap(data_.data() + i * cols(), cols()); }
  ConstRowMap row(std::size_t i) const { return ConstRowMap(data_.data() + i * cols(), cols()); }

  /// Slab `i` of a rank-3 tensor as a [dim(1), dim(2)] matrix.
  MatrixMap slab(std::size_t i) {
    return MatrixMap(data_.data() + i * shape_.at(1) * shape_.at(2), Eigen::Index(shape_[1]), Eigen::Index(shape_[2]));
  }
  ConstMatrixMap slab(std::size_t i) const {
    return ConstMatrixMap(data_.data() + i * shape_.at(1) * shape_.at(2), Eigen::Index(shape_[1]),
                          Eigen::Index(shape_[2]));
  }

  void set_zero() { std::fill(data_.begin(), data_.end(), Scalar(0)); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](Scalar v) { return std::isfinite(v); });
  }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  Shape shape_;
  Storage data_;
};

using Tensor = BasicTensor<double>;

}  // namespace duet
