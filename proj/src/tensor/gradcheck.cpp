#include "stconv/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "stconv/ops.hpp"

namespace stconv {
namespace {

// Evaluates fn on the inputs and reduces the output to a scalar node.
Var scalar_output(Tape<double>& tape, const GraphFn& fn, std::vector<NdArray<double>>& inputs,
                  std::uint64_t seed) {
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (auto& in : inputs) vars.push_back(tape.parameter(in));
  Var out = fn(tape, vars);
  const auto& value = tape.value(out);
  if (value.size() == 1) return out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  NdArray<double> weights(value.shape());
  for (auto& w : weights.data()) w = u(rng);
  Var wv = tape.constant(std::move(weights));
  return ops::sum(tape, ops::mul(tape, out, wv));
}

double evaluate(const GraphFn& fn, std::vector<NdArray<double>>& inputs, std::uint64_t seed) {
  Tape<double> tape(false);
  Var out = scalar_output(tape, fn, inputs, seed);
  return tape.value(out)[0];
}

}  // namespace

GradCheckResult finite_diff_check(const GraphFn& fn, std::vector<NdArray<double>> inputs,
                                  double eps, std::uint64_t projection_seed) {
  for (auto& in : inputs) in.clear_grad();
  {
    Tape<double> tape;
    Var out = scalar_output(tape, fn, inputs, projection_seed);
    tape.backward(out);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& in : inputs) {
    auto g = in.grad();
    analytic.emplace_back(g.begin(), g.end());
    in.clear_grad();
  }

  GradCheckResult result;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    for (std::size_t i = 0; i < inputs[a].size(); ++i) {
      const double orig = inputs[a][i];
      inputs[a][i] = orig + eps;
      const double fp = evaluate(fn, inputs, projection_seed);
      inputs[a][i] = orig - eps;
      const double fm = evaluate(fn, inputs, projection_seed);
      inputs[a][i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double an = analytic[a][i];
      const double denom = std::max({std::abs(an), std::abs(numeric), 1e-12});
      const double rel = std::abs(an - numeric) / denom;
      if (rel > result.max_rel_error) {
        result = GradCheckResult{rel, a, i, an, numeric};
      }
    }
  }
  return result;
}

}  // namespace stconv
