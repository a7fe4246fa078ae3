#include "duet/numkit/param_store.hpp"

#include <cmath>

namespace duet {

Param& ParamStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw StateError("duplicate parameter name '" + name + "'");
  Param p;
  p.grad = Tensor(init.shape());
  p.adam_m = Tensor(init.shape());
  p.adam_v = Tensor(init.shape());
  p.value = std::move(init);
  return entries_.emplace(name, std::move(p)).first->second;
}

Param& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw LookupError("unknown parameter '" + name + "'");
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw LookupError("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, p] : entries_) n += p.value.size();
  return n;
}

void ParamStore::begin_backward() {
  for (auto& [_, p] : entries_) {
    p.grad.set_zero();
    p.grad_ready = true;
  }
}

void ParamStore::begin_backward(std::span<const std::string> names) {
  for (const auto& name : names) {
    Param& p = at(name);
    p.grad.set_zero();
    p.grad_ready = true;
  }
}

void ParamStore::zero_grad() {
  for (auto& [_, p] : entries_) {
    p.grad.set_zero();
    p.grad_ready = false;
  }
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (const auto& [name, p] : entries_) {
    auto it = other.entries_.find(name);
    if (it == other.entries_.end() || !(it->second.value == p.value)) return false;
  }
  return true;
}

Tensor xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / double(fan_in + fan_out));
  Tensor t({fan_in, fan_out});
  for (auto& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

Tensor embedding_uniform(std::size_t rows, std::size_t dim, Rng& rng) {
  const double limit = 0.5 / double(dim);
  Tensor t({rows, dim});
  for (auto& v : t.values()) v = rng.uniform(-limit, limit);
  return t;
}

}  // namespace duet
