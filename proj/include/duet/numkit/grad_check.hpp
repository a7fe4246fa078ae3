#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "duet/numkit/param_store.hpp"

namespace duet {

/// Evaluates a scalar loss at the store's current values. When `with_grad`
/// is true it must also leave d loss / d value in every entry's grad.
using LossFunction = std::function<double(ParamStore&, bool with_grad)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

/// Compares analytic gradients against central differences on up to
/// `max_coords_per_param` coordinates of each entry (0 = all). The error of a
/// coordinate is |a - n| / max(1, |a|, |n|).
GradCheckResult grad_check_detailed(const LossFunction& f, ParamStore& store, double eps = 1e-4,
                                    std::size_t max_coords_per_param = 0, std::uint64_t seed = 0);

double grad_check(const LossFunction& f, ParamStore& store, double eps = 1e-4,
                  std::size_t max_coords_per_param = 0, std::uint64_t seed = 0);

}  // namespace duet
