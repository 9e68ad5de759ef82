#pragma once

#include <span>
#include <vector>

#include "stconv/trialset.hpp"

namespace stconv {

// One biquad, transposed direct form II, a0 normalized to 1.
struct SosSection {
  double b0, b1, b2, a1, a2;
};

// Digital Butterworth band-pass via bilinear transform of the analog
// prototype. `order` is the prototype order; the result has `order` sections.
std::vector<SosSection> butterworth_bandpass(int order, double low_hz, double high_hz,
                                             double sfreq);

// Magnitude response of a cascade at `freq_hz`.
double sos_gain(std::span<const SosSection> sos, double freq_hz, double sfreq);

// Single forward pass with zero initial state.
std::vector<double> sosfilt(std::span<const SosSection> sos, std::span<const double> x);

// Zero-phase forward-backward filtering with odd-extension padding and
// steady-state initial conditions.
std::vector<double> sosfiltfilt(std::span<const SosSection> sos, std::span<const double> x);

// Zero-phase 4th-order Butterworth band-pass applied to every trial row.
// Throws ParameterError unless 0 < low < high < sfreq/2.
TrialSet bandpass(const TrialSet& trials, double low_hz = 8.0, double high_hz = 32.0,
                  int order = 4);

}  // namespace stconv
