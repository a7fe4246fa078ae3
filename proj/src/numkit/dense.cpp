#include "duet/numkit/dense.hpp"

namespace duet {

void Mlp::init(ParamStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
               std::size_t out, Rng& rng) {
  store.add(prefix + ".W1", xavier_uniform(in, hidden, rng));
  store.add(prefix + ".b1", Tensor({hidden}));
  store.add(prefix + ".W2", xavier_uniform(hidden, out, rng));
  store.add(prefix + ".b2", Tensor({out}));
}

Matrix Mlp::forward(const ParamStore& store, const Matrix& x, MlpCache* cache) const {
  const auto& W1 = store.value(name("W1"));
  const auto& W2 = store.value(name("W2"));
  if (x.cols() != W1.matrix().rows()) {
    throw DimensionError(prefix_ + ": input width " + std::to_string(x.cols()) + ", expected " +
                         std::to_string(W1.matrix().rows()));
  }
  Matrix pre = (x * W1.matrix()).rowwise() + store.value(name("b1")).row_vector();
  Matrix hidden = leaky_relu(pre);
  Matrix out = (hidden * W2.matrix()).rowwise() + store.value(name("b2")).row_vector();
  if (cache) {
    cache->input = x;
    cache->hidden_pre = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return out;
}

Matrix Mlp::backward(ParamStore& store, const MlpCache& cache, const Matrix& dout) const {
  Param& W1 = store.at(name("W1"));
  Param& b1 = store.at(name("b1"));
  Param& W2 = store.at(name("W2"));
  Param& b2 = store.at(name("b2"));
  Matrix dhidden = dense_backward(cache.hidden, W2.value.matrix(), dout, W2.grad, &b2.grad);
  Matrix dpre = dhidden.cwiseProduct(leaky_relu_grad(cache.hidden_pre));
  return dense_backward(cache.input, W1.value.matrix(), dpre, W1.grad, &b1.grad);
}

}  // namespace duet
