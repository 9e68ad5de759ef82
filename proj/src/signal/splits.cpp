#include "stconv/splits.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "stconv/errors.hpp"

namespace stconv {

std::vector<Fold> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ParameterError("stratified_kfold: k must be >= 2");
  std::map<int, IndexList> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [label, members] : by_class) {
    if (members.size() < k) {
      throw DataError("stratified_kfold: class " + std::to_string(label) + " has " +
                      std::to_string(members.size()) + " members, fewer than k=" + std::to_string(k));
    }
  }
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> assignment(labels.size());
  std::size_t deal = 0;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    for (auto idx : members) assignment[idx] = deal++ % k;
  }
  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t f = 0; f < k; ++f) {
      (assignment[i] == f ? folds[f].test : folds[f].train).push_back(i);
    }
  }
  return folds;
}

std::pair<IndexList, IndexList> holdout_split(std::span<const std::size_t> indices, double fraction,
                                              std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ParameterError("holdout_split: fraction must lie in (0,1)");
  IndexList shuffled(indices.begin(), indices.end());
  std::mt19937_64 rng(seed);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(shuffled.size())));
  IndexList val(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_val));
  IndexList train(shuffled.begin() + static_cast<std::ptrdiff_t>(n_val), shuffled.end());
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {std::move(train), std::move(val)};
}

std::pair<IndexList, IndexList> stratified_holdout_split(std::span<const std::size_t> indices,
                                                         std::span<const int> labels, double fraction,
                                                         std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ParameterError("holdout_split: fraction must lie in (0,1)");
  std::map<int, IndexList> by_class;
  for (auto i : indices) {
    if (i >= labels.size()) throw DataError("stratified_holdout_split: index out of range");
    by_class[labels[i]].push_back(i);
  }
  std::mt19937_64 rng(seed);
  IndexList train, val;
  // Carry the rounding remainder across classes so the total matches
  // round(fraction * n) as closely as possible.
  double carry = 0.0;
  for (auto& [label, members] : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const double want = fraction * static_cast<double>(members.size()) + carry;
    auto n_val = static_cast<std::size_t>(std::floor(want + 0.5));
    n_val = std::min(n_val, members.size());
    carry = want - static_cast<double>(n_val);
    val.insert(val.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.insert(train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_val), members.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
  return {std::move(train), std::move(val)};
}

}  // namespace stconv
