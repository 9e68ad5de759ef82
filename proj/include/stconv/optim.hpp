#pragma once

#include <cstddef>
#include <vector>

#include "stconv/model.hpp"

namespace stconv {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // coupled L2: added to the gradient
};

template <typename T>
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;
};

// One bias-corrected Adam update of every parameter from its accumulated
// gradient. Moments are kept in double. A parameter without a gradient
// buffer is treated as having zero gradient. Throws NumericError naming the
// parameter when a gradient is not finite; parameters are untouched then.
template <typename T>
void adam_step(std::vector<NamedArray<T>>& params, AdamState<T>& state, const AdamConfig& config);

}  // namespace stconv
