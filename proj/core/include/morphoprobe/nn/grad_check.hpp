#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "morphoprobe/nn/tensor.hpp"

namespace morphoprobe::nn {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  Eigen::Index worst_index = -1;
  std::size_t checked = 0;
};

// Compares analytic gradients against central differences.
//   loss():      deterministic loss at the current parameter values
//   gradients(): zeroes and recomputes every parameter's grad
// Relative error is |a - n| / max(|a| + |n|, floor). At most `per_parameter`
// randomly chosen entries of each parameter are perturbed (all when 0).
template <typename T>
GradCheckResult grad_check(const std::function<T()>& loss, const std::function<void()>& gradients,
                           const ParameterRefs<T>& params, double step = 1e-6, double floor = 1e-6,
                           std::size_t per_parameter = 0, std::uint64_t seed = 0) {
  gradients();
  std::vector<Matrix<T>> analytic;
  for (const auto* p : params) analytic.push_back(p->grad);
  GradCheckResult result;
  Xoshiro256 rng(seed);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = *params[k];
    const auto n = static_cast<std::size_t>(p.value.size());
    std::vector<Eigen::Index> idx;
    if (per_parameter == 0 || per_parameter >= n) {
      for (std::size_t i = 0; i < n; ++i) idx.push_back(static_cast<Eigen::Index>(i));
    } else {
      for (std::size_t i = 0; i < per_parameter; ++i) idx.push_back(static_cast<Eigen::Index>(rng.below(n)));
    }
    for (const Eigen::Index i : idx) {
      T& v = p.value.data()[i];
      const T saved = v;
      v = saved + static_cast<T>(step);
      const double up = static_cast<double>(loss());
      v = saved - static_cast<T>(step);
      const double down = static_cast<double>(loss());
      v = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = static_cast<double>(analytic[k].data()[i]);
      const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), floor);
      ++result.checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_parameter = p.name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace morphoprobe::nn
