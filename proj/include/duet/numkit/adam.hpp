#pragma once

#include <span>
#include <string>

#include "duet/numkit/param_store.hpp"

namespace duet {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Bias-corrected Adam update of every entry (or only `names`), then zeroes the used gradients.
/// Throws StateError if a selected entry has no gradient from a backward pass.
void adam_step(ParamStore& store, const AdamConfig& cfg);
void adam_step(ParamStore& store, const AdamConfig& cfg, std::span<const std::string> names);

}  // namespace duet
