#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stconv/ndarray.hpp"
#include "stconv/representation.hpp"

namespace stconv {

enum class DistanceMetric { kCorrelation, kEuclidean };

// Representational dissimilarity matrix over M models.
struct Rdm {
  std::vector<std::string> model_ids;
  NdArray<double> dissimilarity;  // [M, M]

  std::size_t size() const { return model_ids.size(); }
  double at(std::size_t i, std::size_t j) const { return dissimilarity[i * size() + j]; }
};

// Mean over samples of (1 - Pearson) between the flattened activations, or
// of the Euclidean distance. Throws DimensionError when the sets differ in
// sample count or width.
double representation_distance(const ActivationSet& a, const ActivationSet& b,
                               DistanceMetric metric = DistanceMetric::kCorrelation);

// Pairwise distances with the diagonal set to 0.
Rdm compute_rdm(std::span<const ActivationSet> sets, DistanceMetric metric = DistanceMetric::kCorrelation);

struct RdmContrast {
  double within_mean = 0.0;
  double between_mean = 0.0;
  double gap = 0.0;  // between - within
};

// Means of the off-diagonal entries whose models share / do not share a
// label. Throws DataError unless there are >= 2 labels with >= 2 members each.
RdmContrast rdm_contrast(const Rdm& rdm, std::span<const std::string> labels);

struct PermutationTest {
  RdmContrast observed;
  std::size_t n_permutations = 0;
  // (1 + #{permuted gap >= observed gap}) / (1 + n_permutations)
  double p_value = 1.0;
};

// Null distribution of the gap from random relabelings of the models.
PermutationTest rdm_permutation_test(const Rdm& rdm, std::span<const std::string> labels,
                                     std::size_t n_permutations = 1000, std::uint64_t seed = 0);

}  // namespace stconv
