#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "duet/numkit/random.hpp"
#include "duet/numkit/tensor.hpp"

namespace duet {

struct Param {
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  std::uint64_t step_count = 0;
  bool grad_ready = false;
};

/// Named trainable tensors with gradients and Adam moments. Iteration order is by name.
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor init);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;

  Tensor& value(const std::string& name) { return at(name).value; }
  const Tensor& value(const std::string& name) const { return at(name).value; }
  Tensor& grad(const std::string& name) { return at(name).grad; }

  std::vector<std::string> names() const;
  std::size_t size() const { return entries_.size(); }
  std::size_t parameter_count() const;

  /// Zeroes every gradient and marks it as populated by the coming backward pass.
  void begin_backward();
  /// Same, restricted to `names`; other entries are left untouched.
  void begin_backward(std::span<const std::string> names);
  void zero_grad();

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Values equal entry by entry (optimizer state ignored).
  bool same_values(const ParamStore& other) const;

 private:
  std::map<std::string, Param> entries_;
};

/// Glorot-uniform matrix of shape [fan_in, fan_out].
Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);
/// Rows uniform in [-0.5/dim, 0.5/dim].
Tensor embedding_uniform(std::size_t rows, std::size_t dim, Rng& rng);

}  // namespace duet
