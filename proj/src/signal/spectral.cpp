#include "stconv/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "stconv/errors.hpp"

namespace stconv {

struct WelchEstimator::Plan {
  double* in = nullptr;
  fftw_complex* out = nullptr;
  fftw_plan plan = nullptr;

  explicit Plan(std::size_t n) {
    in = fftw_alloc_real(n);
    out = fftw_alloc_complex(n / 2 + 1);
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }
  ~Plan() {
    fftw_destroy_plan(plan);
    fftw_free(in);
    fftw_free(out);
  }
};

WelchEstimator::WelchEstimator(std::size_t n_times, double sfreq)
    : n_times_(n_times), nperseg_(std::min<std::size_t>(256, n_times)), sfreq_(sfreq) {
  if (n_times < 8) throw ParameterError("welch_psd: need at least 8 samples, got " + std::to_string(n_times));
  if (!(sfreq > 0.0)) throw ParameterError("welch_psd: sampling rate must be positive");
  // Periodic Hann window.
  window_.resize(nperseg_);
  window_power_ = 0.0;
  for (std::size_t i = 0; i < nperseg_; ++i) {
    window_[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                      static_cast<double>(nperseg_));
    window_power_ += window_[i] * window_[i];
  }
  plan_ = std::make_unique<Plan>(nperseg_);
}

WelchEstimator::~WelchEstimator() = default;

Psd WelchEstimator::operator()(std::span<const double> signal) const {
  if (signal.size() != n_times_) {
    throw DimensionError("WelchEstimator: planned for " + std::to_string(n_times_) +
                         " samples, got " + std::to_string(signal.size()));
  }
  const std::size_t step = nperseg_ - nperseg_ / 2;
  const std::size_t n_seg = (n_times_ - nperseg_) / step + 1;
  const std::size_t n_freq = nperseg_ / 2 + 1;
  Psd psd;
  psd.freqs.resize(n_freq);
  psd.density.assign(n_freq, 0.0);
  for (std::size_t k = 0; k < n_freq; ++k) {
    psd.freqs[k] = static_cast<double>(k) * sfreq_ / static_cast<double>(nperseg_);
  }
  for (std::size_t s = 0; s < n_seg; ++s) {
    const double* seg = signal.data() + s * step;
    double mean = 0.0;
    for (std::size_t i = 0; i < nperseg_; ++i) mean += seg[i];
    mean /= static_cast<double>(nperseg_);
    for (std::size_t i = 0; i < nperseg_; ++i) plan_->in[i] = (seg[i] - mean) * window_[i];
    fftw_execute(plan_->plan);
    for (std::size_t k = 0; k < n_freq; ++k) {
      psd.density[k] += plan_->out[k][0] * plan_->out[k][0] + plan_->out[k][1] * plan_->out[k][1];
    }
  }
  const double scale = 1.0 / (sfreq_ * window_power_ * static_cast<double>(n_seg));
  for (std::size_t k = 0; k < n_freq; ++k) {
    const bool edge = k == 0 || (nperseg_ % 2 == 0 && k == n_freq - 1);
    psd.density[k] *= scale * (edge ? 1.0 : 2.0);
  }
  return psd;
}

Psd welch_psd(std::span<const double> signal, double sfreq) {
  WelchEstimator est(signal.size(), sfreq);
  return est(signal);
}

double integrate_band(const Psd& psd, Band band) {
  const double df = psd.resolution();
  double total = 0.0;
  for (std::size_t k = 0; k < psd.freqs.size(); ++k) {
    if (psd.freqs[k] >= band.lo && psd.freqs[k] < band.hi) total += psd.density[k] * df;
  }
  return total;
}

BandPowerTable band_powers(const TrialSet& trials, std::span<const Band> bands) {
  double top = 0.0;
  for (const auto& b : bands) top = std::max(top, b.hi);
  if (!(trials.sfreq / 2.0 > top)) {
    throw ParameterError("band_powers: Nyquist frequency " + std::to_string(trials.sfreq / 2.0) +
                         " Hz must exceed the top band edge " + std::to_string(top) + " Hz");
  }
  const std::size_t N = trials.n_trials(), C = trials.n_channels(), nb = bands.size();
  WelchEstimator est(trials.n_times(), trials.sfreq);
  BandPowerTable table{NdArray<double>({N, C, nb}), std::vector<Band>(bands.begin(), bands.end())};
  std::vector<double> row(trials.n_times());
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t c = 0; c < C; ++c) {
      auto src = trials.row(n, c);
      std::copy(src.begin(), src.end(), row.begin());
      const Psd psd = est(row);
      for (std::size_t b = 0; b < nb; ++b) table.powers[(n * C + c) * nb + b] = integrate_band(psd, bands[b]);
    }
  }
  return table;
}

}  // namespace stconv
