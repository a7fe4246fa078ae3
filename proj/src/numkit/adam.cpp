#include "duet/numkit/adam.hpp"

#include <cmath>

namespace duet {

void AdamConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("adam: lr must be > 0");
  if (!(beta1 > 0 && beta1 < 1)) throw ConfigError("adam: beta1 must lie in (0,1)");
  if (!(beta2 > 0 && beta2 < 1)) throw ConfigError("adam: beta2 must lie in (0,1)");
  if (!(epsilon > 0)) throw ConfigError("adam: epsilon must be > 0");
}

namespace {

void update(const std::string& name, Param& p, const AdamConfig& cfg) {
  if (!p.grad_ready) throw StateError("adam_step: no gradient for '" + name + "'");
  ++p.step_count;
  const double t = double(p.step_count);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto g = p.grad.row_vector().array();
  auto m = p.adam_m.row_vector().array();
  auto v = p.adam_v.row_vector().array();
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.square();
  p.value.row_vector().array() -= cfg.lr * (m / c1) / ((v / c2).sqrt() + cfg.epsilon);
  p.grad.set_zero();
  p.grad_ready = false;
}

}  // namespace

void adam_step(ParamStore& store, const AdamConfig& cfg) {
  cfg.validate();
  for (auto& [name, p] : store) update(name, p, cfg);
}

void adam_step(ParamStore& store, const AdamConfig& cfg, std::span<const std::string> names) {
  cfg.validate();
  for (const auto& name : names) update(name, store.at(name), cfg);
}

}  // namespace duet
