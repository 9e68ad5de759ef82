#include "stconv/optim.hpp"

#include <cmath>

#include "stconv/errors.hpp"

namespace stconv {

template <typename T>
void adam_step(std::vector<NamedArray<T>>& params, AdamState<T>& state, const AdamConfig& config) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.value.size(), 0.0);
      state.v.emplace_back(p.value.size(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                        " parameters, got " + std::to_string(params.size()));
  }
  for (auto& p : params) {
    if (!p.value.has_grad()) continue;
    for (T g : p.value.grad()) {
      if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient for parameter '" + p.name + "'");
    }
  }

  ++state.step;
  const double b1 = config.beta1, b2 = config.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].value;
    const bool has_grad = p.has_grad();
    const std::span<const T> grad = has_grad ? p.grad() : std::span<const T>();
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.size()) throw ContractError("adam_step: state shape mismatch for '" + params[i].name + "'");
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double w = static_cast<double>(p[j]);
      const double g = (has_grad ? static_cast<double>(grad[j]) : 0.0) + config.weight_decay * w;
      m[j] = b1 * m[j] + (1.0 - b1) * g;
      v[j] = b2 * v[j] + (1.0 - b2) * g * g;
      const double mhat = m[j] / c1, vhat = v[j] / c2;
      p[j] = static_cast<T>(w - config.lr * mhat / (std::sqrt(vhat) + config.eps));
    }
  }
}

template void adam_step(std::vector<NamedArray<float>>&, AdamState<float>&, const AdamConfig&);
template void adam_step(std::vector<NamedArray<double>>&, AdamState<double>&, const AdamConfig&);

}  // namespace stconv
