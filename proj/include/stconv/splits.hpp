#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace stconv {

using IndexList = std::vector<std::size_t>;

struct Fold {
  IndexList train;
  IndexList test;
};

// Stratified k-fold partition. Each class's members are shuffled with the
// seed and dealt to the folds round-robin, continuing the deal across classes
// so fold sizes stay balanced. Throws DataError when a class present in
// `labels` has fewer than k members.
std::vector<Fold> stratified_kfold(std::span<const int> labels, std::size_t k, std::uint64_t seed);

// Shuffled split of `indices` into (train, val) with round(fraction * n)
// validation entries.
std::pair<IndexList, IndexList> holdout_split(std::span<const std::size_t> indices,
                                              double fraction, std::uint64_t seed);

// As holdout_split but stratified on labels[index].
std::pair<IndexList, IndexList> stratified_holdout_split(std::span<const std::size_t> indices,
                                                         std::span<const int> labels,
                                                         double fraction, std::uint64_t seed);

}  // namespace stconv
