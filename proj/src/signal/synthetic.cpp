#include "stconv/synthetic.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "stconv/errors.hpp"

namespace stconv {
namespace {

// 10-20 montage names for the two standard layouts.
const std::vector<std::string> kMontage22 = {"Fz",  "FC3", "FC1", "FCz", "FC2", "FC4", "C5",  "C3",
                                             "C1",  "Cz",  "C2",  "C4",  "C6",  "CP3", "CP1", "CPz",
                                             "CP2", "CP4", "P1",  "Pz",  "P2",  "POz"};
const std::vector<std::string> kMontage3 = {"C3", "Cz", "C4"};

std::vector<std::string> channel_names_for(std::size_t n) {
  if (n == 22) return kMontage22;
  if (n == 3) return kMontage3;
  std::vector<std::string> names;
  for (std::size_t c = 0; c < n; ++c) names.push_back("ch" + std::to_string(c));
  return names;
}

std::vector<std::string> class_names_for(std::size_t n) {
  if (n == 2) return {"left_hand", "right_hand"};
  if (n == 4) return {"left_hand", "right_hand", "feet", "tongue"};
  std::vector<std::string> names;
  for (std::size_t k = 0; k < n; ++k) names.push_back("class" + std::to_string(k));
  return names;
}

// Shapes white Gaussian spectra to a 1/f power law and returns unit-RMS
// (in expectation) time series.
class PinkNoise {
 public:
  explicit PinkNoise(std::size_t n) : n_(n), bins_(n / 2 + 1) {
    spec_ = fftw_alloc_complex(bins_);
    out_ = fftw_alloc_real(n_);
    plan_ = fftw_plan_dft_c2r_1d(static_cast<int>(n_), spec_, out_, FFTW_ESTIMATE);
    amp_.assign(bins_, 0.0);
    double var = 0.0;
    for (std::size_t k = 1; k < bins_; ++k) {
      amp_[k] = 1.0 / std::sqrt(static_cast<double>(k));
      const bool nyquist = n_ % 2 == 0 && k == bins_ - 1;
      var += nyquist ? amp_[k] * amp_[k] : 2.0 * amp_[k] * amp_[k];
    }
    var /= static_cast<double>(n_) * static_cast<double>(n_);
    norm_ = 1.0 / (static_cast<double>(n_) * std::sqrt(var));
  }
  ~PinkNoise() {
    fftw_destroy_plan(plan_);
    fftw_free(spec_);
    fftw_free(out_);
  }
  PinkNoise(const PinkNoise&) = delete;
  PinkNoise& operator=(const PinkNoise&) = delete;

  void generate(std::mt19937_64& rng, std::span<double> dst) {
    std::normal_distribution<double> g(0.0, 1.0);
    spec_[0][0] = spec_[0][1] = 0.0;
    for (std::size_t k = 1; k < bins_; ++k) {
      const bool nyquist = n_ % 2 == 0 && k == bins_ - 1;
      if (nyquist) {
        spec_[k][0] = amp_[k] * g(rng);
        spec_[k][1] = 0.0;
      } else {
        spec_[k][0] = amp_[k] * g(rng) / std::numbers::sqrt2;
        spec_[k][1] = amp_[k] * g(rng) / std::numbers::sqrt2;
      }
    }
    fftw_execute(plan_);
    for (std::size_t t = 0; t < n_; ++t) dst[t] = out_[t] * norm_;
  }

 private:
  std::size_t n_;
  std::size_t bins_;
  fftw_complex* spec_ = nullptr;
  double* out_ = nullptr;
  fftw_plan plan_ = nullptr;
  std::vector<double> amp_;
  double norm_ = 1.0;
};

// Unit-RMS 10-12 Hz burst with random frequency, phase, onset, duration
// (half to all of the trial), and a cosine-tapered envelope.
void alpha_burst(std::mt19937_64& rng, double sfreq, std::span<double> dst) {
  const std::size_t n = dst.size();
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double freq = 10.0 + 2.0 * u(rng);
  const double phase = 2.0 * std::numbers::pi * u(rng);
  const auto len = std::max<std::size_t>(2, static_cast<std::size_t>((0.5 + 0.5 * u(rng)) * static_cast<double>(n)));
  const std::size_t onset = static_cast<std::size_t>(u(rng) * static_cast<double>(n - std::min(len, n) + 1)) ;
  const std::size_t taper = std::max<std::size_t>(1, len / 4);
  double energy = 0.0;
  for (std::size_t t = 0; t < n; ++t) {
    double env = 0.0;
    if (t >= onset && t < onset + len) {
      const std::size_t i = t - onset;
      const std::size_t edge = std::min(i, len - 1 - i);
      env = edge >= taper ? 1.0 : 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(edge) / static_cast<double>(taper));
    }
    dst[t] = env * std::sin(2.0 * std::numbers::pi * freq * static_cast<double>(t) / sfreq + phase);
    energy += dst[t] * dst[t];
  }
  const double rms = std::sqrt(energy / static_cast<double>(n));
  if (rms > 0.0) {
    for (double& v : dst) v /= rms;
  }
}

}  // namespace

TrialSet generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_trials == 0 || cfg.n_channels == 0 || cfg.n_times < 8) {
    throw ConfigError("generate_synthetic: trials and channels must be >= 1 and length >= 8");
  }
  if (cfg.n_classes < 2) throw ConfigError("generate_synthetic: at least two classes are required");
  if (cfg.n_classes > cfg.n_channels) {
    throw ConfigError("generate_synthetic: " + std::to_string(cfg.n_classes) +
                      " classes cannot be coded on " + std::to_string(cfg.n_channels) +
                      " channels (one designated channel per class)");
  }
  if (!(cfg.effect_strength >= 0.0)) throw ConfigError("generate_synthetic: effect_strength must be >= 0");
  if (!(cfg.sfreq > 24.0)) throw ConfigError("generate_synthetic: sampling rate must exceed 24 Hz");

  std::mt19937_64 setup(cfg.seed);
  std::vector<std::size_t> perm(cfg.n_channels);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), setup);
  std::vector<std::size_t> class_channel(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cfg.n_classes));

  std::vector<int> labels(cfg.n_trials);
  for (std::size_t i = 0; i < cfg.n_trials; ++i) labels[i] = static_cast<int>(i % cfg.n_classes);
  std::shuffle(labels.begin(), labels.end(), setup);

  const std::size_t C = cfg.n_channels, T = cfg.n_times;
  std::vector<float> buf(cfg.n_trials * C * T);
  PinkNoise noise(T);
  std::vector<double> row(T), burst(T);
  for (std::size_t n = 0; n < cfg.n_trials; ++n) {
    // Independent stream per trial so any trial can be regenerated alone.
    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                      static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(n >> 32), 0x5eedu};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> jitter(0.5, 1.5);
    const std::size_t designated = class_channel[static_cast<std::size_t>(labels[n])];
    for (std::size_t c = 0; c < C; ++c) {
      noise.generate(rng, row);
      if (c == designated && cfg.effect_strength > 0.0) {
        alpha_burst(rng, cfg.sfreq, burst);
        const double amp = cfg.effect_strength * jitter(rng);
        for (std::size_t t = 0; t < T; ++t) row[t] += amp * burst[t];
      }
      float* dst = buf.data() + (n * C + c) * T;
      for (std::size_t t = 0; t < T; ++t) dst[t] = static_cast<float>(row[t]);
    }
  }

  TrialSet out;
  out.data = NdArray<float>({cfg.n_trials, C, T}, std::move(buf));
  out.labels = std::move(labels);
  out.sfreq = cfg.sfreq;
  out.channel_names = channel_names_for(C);
  out.class_names = class_names_for(cfg.n_classes);
  out.metadata = {
      {"generator", "synthetic-1/f-alpha"},
      {"seed", cfg.seed},
      {"effect_strength", cfg.effect_strength},
      {"class_channels", class_channel},
      {"effect_band_hz", {10.0, 12.0}},
  };
  out.validate();
  return out;
}

}  // namespace stconv
