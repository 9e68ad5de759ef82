#include "stconv/rsa.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "stconv/errors.hpp"

namespace stconv {

double representation_distance(const ActivationSet& a, const ActivationSet& b, DistanceMetric metric) {
  if (a.n_samples() != b.n_samples() || a.width() != b.width()) {
    throw DimensionError("rdm: '" + a.model_id + "' has " + std::to_string(a.n_samples()) + " samples of width " +
                         std::to_string(a.width()) + ", '" + b.model_id + "' has " + std::to_string(b.n_samples()) +
                         " of width " + std::to_string(b.width()));
  }
  const std::size_t n = a.n_samples();
  if (n == 0) throw DataError("rdm: empty activation sets");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = a.flat(i), y = b.flat(i);
    if (metric == DistanceMetric::kCorrelation) {
      total += 1.0 - pearson(x, y);
    } else {
      double s = 0.0;
      for (std::size_t j = 0; j < x.size(); ++j) s += (x[j] - y[j]) * (x[j] - y[j]);
      total += std::sqrt(s);
    }
  }
  return total / static_cast<double>(n);
}

Rdm compute_rdm(std::span<const ActivationSet> sets, DistanceMetric metric) {
  const std::size_t m = sets.size();
  if (m == 0) throw DataError("rdm: no activation sets");
  Rdm rdm;
  rdm.dissimilarity = NdArray<double>({m, m});
  for (const auto& s : sets) rdm.model_ids.push_back(s.model_id);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const double d = representation_distance(sets[i], sets[j], metric);
      rdm.dissimilarity[i * m + j] = d;
      rdm.dissimilarity[j * m + i] = d;
    }
  }
  return rdm;
}

namespace {

RdmContrast contrast_from_groups(const Rdm& rdm, const std::vector<int>& group) {
  const std::size_t m = rdm.size();
  double within = 0.0, between = 0.0;
  std::size_t nw = 0, nb = 0;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (i == j) continue;
      if (group[i] == group[j]) {
        within += rdm.at(i, j);
        ++nw;
      } else {
        between += rdm.at(i, j);
        ++nb;
      }
    }
  }
  RdmContrast c;
  c.within_mean = within / static_cast<double>(nw);
  c.between_mean = between / static_cast<double>(nb);
  c.gap = c.between_mean - c.within_mean;
  return c;
}

std::vector<int> group_ids(const Rdm& rdm, std::span<const std::string> labels) {
  if (labels.size() != rdm.size()) {
    throw DimensionError("rdm contrast: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(rdm.size()) + " models");
  }
  std::map<std::string, int> ids;
  std::map<int, std::size_t> sizes;
  std::vector<int> group;
  for (const auto& l : labels) {
    auto [it, _] = ids.emplace(l, static_cast<int>(ids.size()));
    group.push_back(it->second);
    ++sizes[it->second];
  }
  if (ids.size() < 2) throw DataError("rdm contrast: need at least two model types");
  for (const auto& [g, count] : sizes) {
    if (count < 2) throw DataError("rdm contrast: every model type needs at least two members");
  }
  return group;
}

}  // namespace

RdmContrast rdm_contrast(const Rdm& rdm, std::span<const std::string> labels) {
  return contrast_from_groups(rdm, group_ids(rdm, labels));
}

PermutationTest rdm_permutation_test(const Rdm& rdm, std::span<const std::string> labels,
                                     std::size_t n_permutations, std::uint64_t seed) {
  std::vector<int> group = group_ids(rdm, labels);
  PermutationTest out;
  out.observed = contrast_from_groups(rdm, group);
  out.n_permutations = n_permutations;
  std::mt19937_64 rng(seed);
  std::size_t at_least = 0;
  for (std::size_t p = 0; p < n_permutations; ++p) {
    std::shuffle(group.begin(), group.end(), rng);
    at_least += contrast_from_groups(rdm, group).gap >= out.observed.gap;
  }
  out.p_value = static_cast<double>(1 + at_least) / static_cast<double>(1 + n_permutations);
  return out;
}

}  // namespace stconv
