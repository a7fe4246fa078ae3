#include "duet/numkit/grad_check.hpp"

#include <algorithm>
#include <map>
#include <cmath>
#include <numeric>

namespace duet {

namespace {

double finite_loss(const LossFunction& f, ParamStore& store, bool with_grad) {
  const double loss = f(store, with_grad);
  if (!std::isfinite(loss)) throw NumericError("grad_check: loss is not finite");
  return loss;
}

}  // namespace

GradCheckResult grad_check_detailed(const LossFunction& f, ParamStore& store, double eps,
                                    std::size_t max_coords_per_param, std::uint64_t seed) {
  if (!(eps > 0)) throw ArgumentError("grad_check: eps must be > 0");
  store.zero_grad();
  finite_loss(f, store, true);

  // Snapshot analytic gradients; later loss calls must not disturb them.
  std::map<std::string, Tensor> analytic;
  for (auto& [name, p] : store) analytic.emplace(name, p.grad);

  GradCheckResult result;
  Rng rng(seed);
  for (auto& [name, p] : store) {
    std::vector<std::size_t> coords(p.value.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords_per_param != 0 && coords.size() > max_coords_per_param) {
      rng.shuffle(coords);
      coords.resize(max_coords_per_param);
    }
    const Tensor& grad = analytic.at(name);
    for (std::size_t idx : coords) {
      double& theta = p.value[idx];
      const double saved = theta;
      theta = saved + eps;
      const double up = finite_loss(f, store, false);
      theta = saved - eps;
      const double down = finite_loss(f, store, false);
      theta = saved;
      const double numeric = (up - down) / (2 * eps);
      const double a = grad[idx];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++result.coordinates_checked;
      if (err > result.max_relative_error || result.worst_param.empty()) {
        result.max_relative_error = std::max(err, result.max_relative_error);
        result.worst_param = name;
        result.worst_index = idx;
      }
    }
  }
  store.zero_grad();
  return result;
}

double grad_check(const LossFunction& f, ParamStore& store, double eps, std::size_t max_coords_per_param,
                  std::uint64_t seed) {
  return grad_check_detailed(f, store, eps, max_coords_per_param, seed).max_relative_error;
}

}  // namespace duet
