#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <span>

#include "duet/numkit/tensor.hpp"

namespace duet {

inline constexpr double kLeakySlope = 0.2;

template <std::floating_point Scalar>
Scalar sigmoid(Scalar x) {
  // Branching on sign keeps exp() from overflowing.
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar z = std::exp(x);
  return z / (Scalar(1) + z);
}

template <std::floating_point Scalar>
Scalar leaky_relu(Scalar x, Scalar slope = Scalar(kLeakySlope)) {
  return x >= Scalar(0) ? x : slope * x;
}

template <typename Derived>
auto leaky_relu(const Eigen::MatrixBase<Derived>& x, typename Derived::Scalar slope = kLeakySlope) {
  using Scalar = typename Derived::Scalar;
  return x.unaryExpr([slope](Scalar v) { return v >= Scalar(0) ? v : slope * v; });
}

/// d leaky_relu / d x, evaluated at the pre-activation.
template <typename Derived>
auto leaky_relu_grad(const Eigen::MatrixBase<Derived>& pre, typename Derived::Scalar slope = kLeakySlope) {
  using Scalar = typename Derived::Scalar;
  return pre.unaryExpr([slope](Scalar v) { return v >= Scalar(0) ? Scalar(1) : slope; });
}

Tensor leaky_relu(const Tensor& x, double slope = kLeakySlope);

/// Max-shifted softmax over a non-empty vector.
template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  if (logits.size() == 0) throw ArgumentError("softmax of an empty vector");
  const Scalar shift = logits.maxCoeff();
  VectorX<Scalar> out = (logits.derived().reshaped().array() - shift).exp().matrix();
  out /= out.sum();
  return out;
}

std::vector<double> softmax(std::span<const double> logits);

/// Backward of softmax: given weights p and upstream dL/dp, returns dL/dlogits.
template <typename DerivedP, typename DerivedG>
VectorX<typename DerivedP::Scalar> softmax_backward(const Eigen::MatrixBase<DerivedP>& p,
                                                     const Eigen::MatrixBase<DerivedG>& dp) {
  const auto inner = p.derived().reshaped().dot(dp.derived().reshaped());
  return (p.derived().reshaped().array() * (dp.derived().reshaped().array() - inner)).matrix();
}

/// out = x * W + b, rows of `x` are examples.
Tensor affine(const Tensor& x, const Tensor& W, const Tensor& b);

}  // namespace duet
