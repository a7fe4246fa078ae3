#pragma once

#include <string>

#include "duet/numkit/ops.hpp"
#include "duet/numkit/param_store.hpp"

namespace duet {

/// Accumulates the gradients of y = x W + b into dW, db and returns dL/dx.
template <typename DerivedX, typename DerivedW, typename DerivedY>
Matrix dense_backward(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedW>& W,
                      const Eigen::MatrixBase<DerivedY>& dy, Tensor& dW, Tensor* db) {
  dW.matrix().noalias() += x.transpose() * dy;
  if (db) db->row_vector() += dy.colwise().sum();
  return dy * W.transpose();
}

struct MlpCache {
  Matrix input;
  Matrix hidden_pre;
  Matrix hidden;
};

/// One-hidden-layer perceptron `prefix.{W1,b1,W2,b2}`:
/// out = LeakyReLU(x W1 + b1) W2 + b2. Rows are examples.
class Mlp {
 public:
  explicit Mlp(std::string prefix) : prefix_(std::move(prefix)) {}

  static void init(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
                   std::size_t out, Rng& rng);

  Matrix forward(const ParamStore& store, const Matrix& x, MlpCache* cache = nullptr) const;

  /// Accumulates parameter gradients; returns dL/dx.
  Matrix backward(ParamStore& store, const MlpCache& cache, const Matrix& dout) const;

  const std::string& prefix() const { return prefix_; }

 private:
  std::string name(const char* leaf) const { return prefix_ + "." + leaf; }
  std::string prefix_;
};

}  // namespace duet
