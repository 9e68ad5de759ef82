#include "stconv/scaler.hpp"

#include <cmath>
#include <numeric>

#include "stconv/errors.hpp"

namespace stconv {

Scaler Scaler::fit(const TrialSet& trials) {
  std::vector<std::size_t> all(trials.n_trials());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return fit(trials, all);
}

Scaler Scaler::fit(const TrialSet& trials, std::span<const std::size_t> indices) {
  if (indices.empty() || trials.n_trials() == 0) throw DataError("Scaler::fit: empty fit set");
  const std::size_t C = trials.n_channels(), T = trials.n_times();
  Scaler s;
  s.mean.assign(C, 0.0);
  s.std.assign(C, 1.0);
  const double count = static_cast<double>(indices.size() * T);
  for (std::size_t c = 0; c < C; ++c) {
    double sum = 0.0;
    for (auto n : indices) {
      for (float v : trials.row(n, c)) sum += v;
    }
    const double mu = sum / count;
    double ss = 0.0;
    for (auto n : indices) {
      for (float v : trials.row(n, c)) ss += (v - mu) * (v - mu);
    }
    const double sd = std::sqrt(ss / count);
    s.mean[c] = mu;
    s.std[c] = sd < 1e-12 ? 1.0 : sd;
  }
  return s;
}

TrialSet Scaler::apply(const TrialSet& trials) const {
  if (trials.n_channels() != mean.size()) {
    throw DimensionError("Scaler::apply: fitted on " + std::to_string(mean.size()) +
                         " channels, data has " + std::to_string(trials.n_channels()));
  }
  TrialSet out = trials;
  for (std::size_t n = 0; n < trials.n_trials(); ++n) {
    for (std::size_t c = 0; c < trials.n_channels(); ++c) {
      for (float& v : out.row(n, c)) v = static_cast<float>((v - mean[c]) / std[c]);
    }
  }
  return out;
}

}  // namespace stconv
