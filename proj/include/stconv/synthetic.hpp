#pragma once

#include <cstddef>
#include <cstdint>

#include "stconv/trialset.hpp"

namespace stconv {

struct SyntheticConfig {
  std::size_t n_trials = 400;
  std::size_t n_channels = 22;
  std::size_t n_times = 1000;
  double sfreq = 250.0;
  std::size_t n_classes = 4;
  // RMS of the class-coding 10-12 Hz burst in units of the background noise RMS.
  double effect_strength = 1.0;
  std::uint64_t seed = 0;
};

// Synthetic EEG-like trials: unit-RMS 1/f background noise on every channel
// plus, for a trial of class y, a randomized-phase 10-12 Hz burst in the
// channel designated for class y. The class-to-channel map is drawn from the
// seed and recorded in metadata["class_channels"]. Labels are balanced to
// within one trial per class. Throws ConfigError when n_classes exceeds
// n_channels or a count is zero.
TrialSet generate_synthetic(const SyntheticConfig& config);

}  // namespace stconv
