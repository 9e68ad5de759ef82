#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "stconv/ndarray.hpp"
#include "stconv/trialset.hpp"

namespace stconv {

struct Psd {
  std::vector<double> freqs;
  std::vector<double> density;  // units^2 / Hz
  double resolution() const { return freqs.size() > 1 ? freqs[1] - freqs[0] : 0.0; }
};

// Welch estimator with a cached FFT plan: Hann window of min(256, T) samples,
// 50% overlap, per-segment mean removal, one-sided density scaling.
class WelchEstimator {
 public:
  WelchEstimator(std::size_t n_times, double sfreq);
  ~WelchEstimator();
  WelchEstimator(const WelchEstimator&) = delete;
  WelchEstimator& operator=(const WelchEstimator&) = delete;

  Psd operator()(std::span<const double> signal) const;

  std::size_t segment_length() const { return nperseg_; }

 private:
  struct Plan;
  std::size_t n_times_;
  std::size_t nperseg_;
  double sfreq_;
  std::vector<double> window_;
  double window_power_;
  std::unique_ptr<Plan> plan_;
};

// Throws ParameterError when the signal is shorter than 8 samples.
Psd welch_psd(std::span<const double> signal, double sfreq);

// Half-open frequency band [lo, hi) in Hz.
struct Band {
  double lo;
  double hi;
};

inline constexpr std::array<Band, 5> kPowerBands{
    {{8.0, 10.0}, {10.0, 12.0}, {12.0, 16.0}, {16.0, 24.0}, {24.0, 32.0}}};

// Integrated Welch power per trial, channel, and band.
struct BandPowerTable {
  NdArray<double> powers;  // [N, C, n_bands]
  std::vector<Band> bands;

  std::size_t n_trials() const { return powers.dim(0); }
  std::size_t n_channels() const { return powers.dim(1); }
  std::size_t n_bands() const { return powers.dim(2); }
  double at(std::size_t n, std::size_t c, std::size_t b) const {
    return powers[(n * n_channels() + c) * n_bands() + b];
  }
};

// Sums psd * df over bins whose centre frequency lies in [lo, hi).
double integrate_band(const Psd& psd, Band band);

// Throws ParameterError unless sfreq/2 exceeds the top band edge.
BandPowerTable band_powers(const TrialSet& trials,
                           std::span<const Band> bands = std::span<const Band>(kPowerBands));

}  // namespace stconv
