#include "stconv/filter.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "stconv/errors.hpp"

namespace stconv {
namespace {

using cd = std::complex<double>;

// Transposed direct form II over one section, in place.
void run_section(const SosSection& s, std::vector<double>& x, double z1, double z2) {
  for (double& v : x) {
    const double in = v;
    const double out = s.b0 * in + z1;
    z1 = s.b1 * in - s.a1 * out + z2;
    z2 = s.b2 * in - s.a2 * out;
    v = out;
  }
}

// Steady-state section states for a unit step input, scaled by the DC gain
// of the preceding sections.
std::vector<std::pair<double, double>> step_states(std::span<const SosSection> sos) {
  std::vector<std::pair<double, double>> zi;
  double scale = 1.0;
  for (const auto& s : sos) {
    const double g = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
    const double z2 = s.b2 - s.a2 * g;
    const double z1 = s.b1 - s.a1 * g + z2;
    zi.emplace_back(z1 * scale, z2 * scale);
    scale *= g;
  }
  return zi;
}

}  // namespace

std::vector<SosSection> butterworth_bandpass(int order, double low_hz, double high_hz,
                                             double sfreq) {
  if (order < 1) throw ParameterError("butterworth_bandpass: order must be >= 1");
  if (!(sfreq > 0.0) || !(low_hz > 0.0) || !(low_hz < high_hz) || !(high_hz < sfreq / 2.0)) {
    throw ParameterError("butterworth_bandpass: need 0 < low < high < sfreq/2, got low=" +
                         std::to_string(low_hz) + " high=" + std::to_string(high_hz) +
                         " sfreq=" + std::to_string(sfreq));
  }
  const double fs2 = 2.0 * sfreq;
  const double w1 = fs2 * std::tan(std::numbers::pi * low_hz / sfreq);
  const double w2 = fs2 * std::tan(std::numbers::pi * high_hz / sfreq);
  const double bw = w2 - w1;
  const double w0sq = w1 * w2;

  std::vector<cd> poles;
  for (int k = 0; k < order; ++k) {
    const cd p = std::polar(1.0, std::numbers::pi * (2.0 * k + order + 1) / (2.0 * order));
    const cd half = p * bw / 2.0;
    const cd root = std::sqrt(half * half - w0sq);
    for (const cd s : {half + root, half - root}) poles.push_back((fs2 + s) / (fs2 - s));
  }

  // Pair each upper-half-plane pole with its conjugate; real poles pair up.
  std::vector<SosSection> sos;
  std::vector<double> reals;
  for (const cd z : poles) {
    if (std::abs(z.imag()) < 1e-12) {
      reals.push_back(z.real());
    } else if (z.imag() > 0) {
      sos.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
    }
  }
  std::sort(reals.begin(), reals.end());
  for (std::size_t i = 0; i + 1 < reals.size(); i += 2) {
    sos.push_back({1.0, 0.0, -1.0, -(reals[i] + reals[i + 1]), reals[i] * reals[i + 1]});
  }

  const double center_hz = sfreq / std::numbers::pi * std::atan(std::sqrt(w0sq) / fs2);
  const double g = sos_gain(sos, center_hz, sfreq);
  const double per_section = std::pow(1.0 / g, 1.0 / static_cast<double>(sos.size()));
  for (auto& s : sos) {
    s.b0 *= per_section;
    s.b1 *= per_section;
    s.b2 *= per_section;
  }
  return sos;
}

double sos_gain(std::span<const SosSection> sos, double freq_hz, double sfreq) {
  const cd z1 = std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / sfreq);
  const cd z2 = z1 * z1;
  cd h = 1.0;
  for (const auto& s : sos) h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return std::abs(h);
}

std::vector<double> sosfilt(std::span<const SosSection> sos, std::span<const double> x) {
  std::vector<double> y(x.begin(), x.end());
  for (const auto& s : sos) run_section(s, y, 0.0, 0.0);
  return y;
}

std::vector<double> sosfiltfilt(std::span<const SosSection> sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n < 2) return std::vector<double>(x.begin(), x.end());
  const std::size_t pad = std::min<std::size_t>(3 * (2 * sos.size() + 1), n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto zi = step_states(sos);
  auto pass = [&](std::vector<double>& v) {
    const double x0 = v.front();
    for (std::size_t s = 0; s < sos.size(); ++s) run_section(sos[s], v, zi[s].first * x0, zi[s].second * x0);
  };
  pass(ext);
  std::reverse(ext.begin(), ext.end());
  pass(ext);
  std::reverse(ext.begin(), ext.end());
  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                             ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

TrialSet bandpass(const TrialSet& trials, double low_hz, double high_hz, int order) {
  const auto sos = butterworth_bandpass(order, low_hz, high_hz, trials.sfreq);
  TrialSet out = trials;
  std::vector<double> row(trials.n_times());
  for (std::size_t n = 0; n < trials.n_trials(); ++n) {
    for (std::size_t c = 0; c < trials.n_channels(); ++c) {
      auto src = trials.row(n, c);
      std::copy(src.begin(), src.end(), row.begin());
      const auto filtered = sosfiltfilt(sos, row);
      auto dst = out.row(n, c);
      std::transform(filtered.begin(), filtered.end(), dst.begin(),
                     [](double v) { return static_cast<float>(v); });
    }
  }
  return out;
}

}  // namespace stconv
