#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "stconv/ndarray.hpp"
#include "stconv/tape.hpp"

namespace stconv {

// Builds a graph from the given input nodes and returns its output node.
using GraphFn = std::function<Var(Tape<double>&, std::span<const Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

// Compares reverse-mode gradients against central differences for every
// element of every input. Non-scalar outputs are reduced to a scalar with a
// fixed pseudo-random projection so that every output element contributes.
// Relative error is |a - n| / max(|a|, |n|, 1e-12).
//
// `fn` must be deterministic (reseed any RNG inside it).
GradCheckResult finite_diff_check(const GraphFn& fn, std::vector<NdArray<double>> inputs,
                                  double eps = 1e-5, std::uint64_t projection_seed = 17);

}  // namespace stconv
