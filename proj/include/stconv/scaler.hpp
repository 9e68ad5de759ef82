#pragma once

#include <span>
#include <vector>

#include "stconv/trialset.hpp"

namespace stconv {

// Per-channel standardization: (x - mean_c) / std_c, with population std
// computed over every trial and sample of the fit set. Channels whose std is
// below 1e-12 are left unscaled (std treated as 1).
struct Scaler {
  std::vector<double> mean;
  std::vector<double> std;

  static Scaler fit(const TrialSet& trials);
  static Scaler fit(const TrialSet& trials, std::span<const std::size_t> indices);

  // Throws DimensionError on a channel-count mismatch.
  TrialSet apply(const TrialSet& trials) const;
};

inline Scaler standard_scale(const TrialSet& fit_set) { return Scaler::fit(fit_set); }

}  // namespace stconv
