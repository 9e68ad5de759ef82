#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "stconv/ndarray.hpp"

namespace stconv {

// A labeled set of equal-length multichannel trials.
struct TrialSet {
  NdArray<float> data;  // [N, C, T]
  std::vector<int> labels;
  double sfreq = 0.0;
  std::vector<std::string> channel_names;
  std::vector<std::string> class_names;
  nlohmann::json metadata = nlohmann::json::object();

  std::size_t n_trials() const { return data.empty() ? 0 : data.dim(0); }
  std::size_t n_channels() const { return data.empty() ? 0 : data.dim(1); }
  std::size_t n_times() const { return data.empty() ? 0 : data.dim(2); }
  std::size_t n_classes() const { return class_names.size(); }

  std::span<const float> row(std::size_t trial, std::size_t channel) const {
    return data.data().subspan((trial * n_channels() + channel) * n_times(), n_times());
  }
  std::span<float> row(std::size_t trial, std::size_t channel) {
    return data.data().subspan((trial * n_channels() + channel) * n_times(), n_times());
  }

  // Throws DataError when an invariant does not hold.
  void validate() const;

  TrialSet subset(std::span<const std::size_t> indices) const;

  // Per-class trial counts, indexed by class id.
  std::vector<std::size_t> class_counts() const;
};

// Writes `dir/manifest.json` and `dir/data.bin` (little-endian float32,
// trial-major, then channel, then time).
void save_trialset(const TrialSet& trials, const std::filesystem::path& dir);

// Reads a directory written by save_trialset. A directory holding an
// `index.csv` instead of a manifest is imported with import_csv_trials at
// `csv_sfreq`.
TrialSet load_trialset(const std::filesystem::path& dir, double csv_sfreq = 250.0);

// CSV import: `dir/index.csv` has a `file,label` header and one row per trial;
// each referenced file holds one trial with one row per channel and one
// comma-separated column per time sample.
TrialSet import_csv_trials(const std::filesystem::path& dir, double sfreq);

inline constexpr int kTrialSetFormatVersion = 1;

}  // namespace stconv
