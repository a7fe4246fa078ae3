#include "duet/numkit/ops.hpp"

namespace duet {

Tensor leaky_relu(const Tensor& x, double slope) {
  Tensor out(x.shape());
  out.row_vector() = leaky_relu(x.row_vector(), slope);
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  // Copy into aligned storage so the reduction order does not depend on the caller's buffer.
  const Vector aligned = Eigen::Map<const Vector>(logits.data(), Eigen::Index(logits.size()));
  const Vector p = softmax(aligned);
  return {p.data(), p.data() + p.size()};
}

Tensor affine(const Tensor& x, const Tensor& W, const Tensor& b) {
  if (x.rank() != 2 || W.rank() != 2 || b.rank() != 1) {
    throw DimensionError("affine expects x[n,in], W[in,out], b[out]; got " + shape_string(x.shape()) + ", " +
                         shape_string(W.shape()) + ", " + shape_string(b.shape()));
  }
  if (x.dim(1) != W.dim(0) || W.dim(1) != b.dim(0)) {
    throw DimensionError("affine dimension mismatch: x" + shape_string(x.shape()) + " W" +
                         shape_string(W.shape()) + " b" + shape_string(b.shape()));
  }
  Tensor out({x.dim(0), W.dim(1)});
  out.matrix() = (x.matrix() * W.matrix()).rowwise() + b.row_vector();
  return out;
}

}  // namespace duet
