#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>

#include "stconv/errors.hpp"
#include "stconv/filter.hpp"
#include "stconv/scaler.hpp"
#include "stconv/spectral.hpp"
#include "stconv/splits.hpp"
#include "stconv/synthetic.hpp"
#include "stconv/trialset.hpp"
#include "test_util.hpp"

namespace stconv {
namespace {

using testing::make_trials;
using testing::TempDir;

constexpr double kPi = std::numbers::pi;

std::vector<double> sinusoid(double freq, double sfreq, std::size_t n, double amp = 1.0, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = amp * std::sin(2.0 * kPi * freq * t / sfreq + phase);
  return x;
}

// RMS over the middle half, away from the filter's edge transients.
double mid_rms(const std::vector<double>& x) {
  double s = 0.0;
  const std::size_t lo = x.size() / 4, hi = 3 * x.size() / 4;
  for (std::size_t i = lo; i < hi; ++i) s += x[i] * x[i];
  return std::sqrt(s / static_cast<double>(hi - lo));
}

TrialSet single_channel(const std::vector<double>& x, double sfreq) {
  return make_trials(1, 1, x.size(), std::vector<float>(x.begin(), x.end()), {0}, 1, sfreq);
}

std::vector<double> filtered(const std::vector<double>& x, double sfreq) {
  const TrialSet out = bandpass(single_channel(x, sfreq));
  auto r = out.row(0, 0);
  return {r.begin(), r.end()};
}

// ---------------------------------------------------------------- band-pass

TEST(Bandpass, AttenuatesOneOctaveBelowAndAbove) {
  for (double f : {4.0, 64.0}) {
    const auto x = sinusoid(f, 250.0, 2000);
    EXPECT_LT(mid_rms(filtered(x, 250.0)), 0.1 * mid_rms(x)) << f << " Hz";
  }
}

TEST(Bandpass, PassesInBandSinusoid) {
  const auto x = sinusoid(16.0, 250.0, 2000);
  EXPECT_NEAR(mid_rms(filtered(x, 250.0)) / mid_rms(x), 1.0, 0.05);
}

TEST(Bandpass, ZeroInZeroOut) {
  const auto y = filtered(std::vector<double>(500, 0.0), 250.0);
  for (double v : y) EXPECT_EQ(v, 0.0);
}

TEST(Bandpass, DesignGainMatchesAttenuationFloor) {
  const auto sos = butterworth_bandpass(4, 8.0, 32.0, 250.0);
  EXPECT_EQ(sos.size(), 4u);
  // filtfilt squares the single-pass gain.
  EXPECT_LT(std::pow(sos_gain(sos, 4.0, 250.0), 2), 0.1);
  EXPECT_LT(std::pow(sos_gain(sos, 64.0, 250.0), 2), 0.1);
  EXPECT_NEAR(sos_gain(sos, 16.0, 250.0), 1.0, 0.02);
}

TEST(Bandpass, IsZeroPhase) {
  for (double f : {12.0, 16.0, 24.0}) {
    const auto x = sinusoid(f, 250.0, 2000, 1.0, 0.3);
    const auto y = filtered(x, 250.0);
    int best_lag = 99;
    double best = -1e300;
    for (int lag = -10; lag <= 10; ++lag) {
      double s = 0.0;
      for (std::size_t t = 500; t < 1500; ++t) s += x[t] * y[static_cast<std::size_t>(static_cast<int>(t) + lag)];
      if (s > best) {
        best = s;
        best_lag = lag;
      }
    }
    EXPECT_EQ(best_lag, 0) << f << " Hz";
  }
}

TEST(Bandpass, RejectsEdgesOutsideNyquist) {
  const TrialSet s = single_channel(sinusoid(10.0, 250.0, 300), 250.0);
  EXPECT_THROW(bandpass(s, 8.0, 130.0), ParameterError);
  EXPECT_THROW(bandpass(s, 0.0, 32.0), ParameterError);
  EXPECT_THROW(bandpass(s, 32.0, 8.0), ParameterError);
}

// ------------------------------------------------------------------- scaler

TEST(Scaler, FitEqualsApplyGivesZeroMeanUnitStd) {
  const TrialSet s = generate_synthetic({.n_trials = 20, .n_channels = 3, .n_times = 200, .n_classes = 2, .seed = 3});
  TrialSet shifted = s;
  for (std::size_t i = 0; i < shifted.data.size(); ++i) shifted.data[i] = shifted.data[i] * 5.0f + 2.0f;
  const TrialSet z = Scaler::fit(shifted).apply(shifted);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0, v = 0.0, n = 0.0;
    for (std::size_t i = 0; i < z.n_trials(); ++i) {
      for (float x : z.row(i, c)) {
        m += x;
        v += static_cast<double>(x) * x;
        n += 1.0;
      }
    }
    m /= n;
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(std::sqrt(v / n - m * m), 1.0, 1e-6);
  }
}

TEST(Scaler, ConstantChannelBecomesZero) {
  std::vector<float> d(2 * 2 * 5);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = (i / 5) % 2 == 0 ? 7.0f : static_cast<float>(i);
  const TrialSet s = make_trials(2, 2, 5, d, {0, 0}, 1);
  const Scaler sc = Scaler::fit(s);
  EXPECT_EQ(sc.std[0], 1.0);
  const TrialSet z = sc.apply(s);
  for (std::size_t i = 0; i < 2; ++i) {
    for (float v : z.row(i, 0)) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Scaler, HeldOutStdNearOne) {
  const TrialSet s = generate_synthetic({.n_trials = 1000, .n_channels = 3, .n_times = 200, .n_classes = 2,
                                         .effect_strength = 0.0, .seed = 11});
  IndexList fit(500), rest(500);
  std::iota(fit.begin(), fit.end(), std::size_t{0});
  std::iota(rest.begin(), rest.end(), std::size_t{500});
  const TrialSet z = Scaler::fit(s, fit).apply(s.subset(rest));
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0, v = 0.0, n = 0.0;
    for (std::size_t i = 0; i < z.n_trials(); ++i) {
      for (float x : z.row(i, c)) {
        m += x;
        v += static_cast<double>(x) * x;
        n += 1.0;
      }
    }
    m /= n;
    const double sd = std::sqrt(v / n - m * m);
    EXPECT_GE(sd, 0.8);
    EXPECT_LE(sd, 1.2);
  }
}

TEST(Scaler, ChannelMismatchIsDimensionError) {
  const TrialSet a = make_trials(1, 2, 4, std::vector<float>(8, 1.0f), {0}, 1);
  const TrialSet b = make_trials(1, 3, 4, std::vector<float>(12, 1.0f), {0}, 1);
  EXPECT_THROW(Scaler::fit(a).apply(b), DimensionError);
}

// -------------------------------------------------------------------- Welch

double total_power(const Psd& p) { return std::accumulate(p.density.begin(), p.density.end(), 0.0) * p.resolution(); }

TEST(Welch, SinusoidParseval) {
  const auto x = sinusoid(11.0, 250.0, 1000);
  const Psd p = welch_psd(x, 250.0);
  EXPECT_NEAR(total_power(p), 0.5, 0.5 * 0.05);
  EXPECT_DOUBLE_EQ(p.resolution(), 250.0 / 256.0);
}

TEST(Welch, ParsevalAcrossFrequenciesAndPhases) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> freq(3.0, 100.0), phase(0.0, 2 * kPi), amp(0.1, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double a = amp(rng);
    const auto x = sinusoid(freq(rng), 250.0, 1000, a, phase(rng));
    EXPECT_NEAR(total_power(welch_psd(x, 250.0)) / (a * a / 2), 1.0, 0.05);
  }
}

TEST(Welch, WhiteNoiseIsFlatWithTotalNearVariance) {
  const double var = 4.0, fs = 250.0;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, std::sqrt(var));
  std::vector<double> mean_density;
  double total = 0.0;
  const int reps = 20;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> x(4096);
    for (auto& v : x) v = g(rng);
    const Psd p = welch_psd(x, fs);
    if (mean_density.empty()) mean_density.assign(p.density.size(), 0.0);
    for (std::size_t k = 0; k < p.density.size(); ++k) mean_density[k] += p.density[k] / reps;
    total += total_power(p) / reps;
  }
  EXPECT_NEAR(total, var, 0.1 * var);
  // Quarter-band averages of the density sit at var / (fs / 2).
  const std::size_t q = mean_density.size() / 4;
  for (std::size_t part = 0; part < 4; ++part) {
    const double avg = std::accumulate(mean_density.begin() + part * q + 1, mean_density.begin() + (part + 1) * q, 0.0) /
                       static_cast<double>(q - 1);
    EXPECT_NEAR(avg / (var / (fs / 2)), 1.0, 0.1) << "quarter " << part;
  }
}

TEST(Welch, ZeroSignalZeroPsd) {
  const Psd p = welch_psd(std::vector<double>(300, 0.0), 250.0);
  for (double v : p.density) EXPECT_EQ(v, 0.0);
}

TEST(Welch, ShortSignalUsesWholeLengthAndRejectsTiny) {
  WelchEstimator est(100, 250.0);
  EXPECT_EQ(est.segment_length(), 100u);
  EXPECT_THROW(welch_psd(std::vector<double>(7, 1.0), 250.0), ParameterError);
}

// --------------------------------------------------------------- band power

TEST(BandPowers, SinusoidLandsInItsBand) {
  const auto x = sinusoid(11.0, 250.0, 1000);
  const BandPowerTable t = band_powers(single_channel(x, 250.0));
  ASSERT_EQ(t.n_bands(), 5u);
  double total = 0.0;
  for (std::size_t b = 0; b < 5; ++b) total += t.at(0, 0, b);
  EXPECT_GE(t.at(0, 0, 1) / total, 0.9);
}

TEST(BandPowers, LowerEdgeInclusiveUpperExclusive) {
  Psd p;
  p.freqs = {8.0, 9.0, 10.0, 11.0, 12.0};
  p.density = {1.0, 2.0, 4.0, 8.0, 16.0};
  EXPECT_DOUBLE_EQ(integrate_band(p, {8.0, 10.0}), 3.0);
  EXPECT_DOUBLE_EQ(integrate_band(p, {10.0, 12.0}), 12.0);
}

TEST(BandPowers, BandsAreContiguous) {
  for (std::size_t b = 1; b < kPowerBands.size(); ++b) EXPECT_EQ(kPowerBands[b].lo, kPowerBands[b - 1].hi);
  EXPECT_EQ(kPowerBands.front().lo, 8.0);
  EXPECT_EQ(kPowerBands.back().hi, 32.0);
}

TEST(BandPowers, NonNegativeForRandomInputs) {
  const TrialSet s = generate_synthetic({.n_trials = 10, .n_channels = 4, .n_times = 300, .n_classes = 2, .seed = 2});
  const BandPowerTable t = band_powers(s);
  EXPECT_EQ(t.powers.shape(), (Shape{10, 4, 5}));
  for (double v : t.powers.data()) EXPECT_GE(v, 0.0);
}

TEST(BandPowers, AdditiveOverBandDisjointSinusoids) {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> ph(0.0, 2 * kPi);
  for (auto [fa, fb] : {std::pair{9.0, 20.0}, {11.0, 28.0}, {14.0, 26.0}}) {
    const auto a = sinusoid(fa, 250.0, 1000, 1.0, ph(rng));
    const auto b = sinusoid(fb, 250.0, 1000, 0.7, ph(rng));
    std::vector<double> sum(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) sum[i] = a[i] + b[i];
    const auto ta = band_powers(single_channel(a, 250.0)), tb = band_powers(single_channel(b, 250.0)),
               ts = band_powers(single_channel(sum, 250.0));
    double total = 0.0;
    for (std::size_t k = 0; k < 5; ++k) total += ta.at(0, 0, k) + tb.at(0, 0, k);
    for (std::size_t k = 0; k < 5; ++k) {
      const double expect = ta.at(0, 0, k) + tb.at(0, 0, k);
      EXPECT_NEAR(ts.at(0, 0, k), expect, 0.05 * std::max(expect, 0.01 * total)) << fa << "+" << fb << " band " << k;
    }
  }
}

TEST(BandPowers, RejectsLowSamplingRate) {
  EXPECT_THROW(band_powers(single_channel(sinusoid(5.0, 60.0, 300), 60.0)), ParameterError);
}

// ---------------------------------------------------------------- synthetic

// Area under the ROC curve of `score` for positives vs negatives.
double auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  double wins = 0.0;
  for (double p : pos) {
    for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
  }
  return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

// Binary logistic regression on standardized features, trained by gradient
// descent on the first half and scored on the second.
double logistic_holdout_accuracy(const std::vector<std::vector<double>>& x, const std::vector<int>& y) {
  const std::size_t n = x.size(), d = x[0].size(), half = n / 2;
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (std::size_t i = 0; i < half; ++i) {
    for (std::size_t j = 0; j < d; ++j) mu[j] += x[i][j] / half;
  }
  for (std::size_t i = 0; i < half; ++i) {
    for (std::size_t j = 0; j < d; ++j) sd[j] += (x[i][j] - mu[j]) * (x[i][j] - mu[j]) / half;
  }
  for (auto& s : sd) s = std::sqrt(s) + 1e-12;
  std::vector<double> w(d + 1, 0.0);
  for (int it = 0; it < 500; ++it) {
    std::vector<double> g(d + 1, 0.0);
    for (std::size_t i = 0; i < half; ++i) {
      double z = w[d];
      for (std::size_t j = 0; j < d; ++j) z += w[j] * (x[i][j] - mu[j]) / sd[j];
      const double err = 1.0 / (1.0 + std::exp(-z)) - y[i];
      for (std::size_t j = 0; j < d; ++j) g[j] += err * (x[i][j] - mu[j]) / sd[j] / half;
      g[d] += err / half;
    }
    for (std::size_t j = 0; j <= d; ++j) w[j] -= 0.5 * g[j];
  }
  std::size_t hits = 0;
  for (std::size_t i = half; i < n; ++i) {
    double z = w[d];
    for (std::size_t j = 0; j < d; ++j) z += w[j] * (x[i][j] - mu[j]) / sd[j];
    hits += (z > 0.0) == (y[i] == 1);
  }
  return static_cast<double>(hits) / static_cast<double>(n - half);
}

std::vector<std::vector<double>> log_band_features(const TrialSet& s) {
  const BandPowerTable t = band_powers(s);
  std::vector<std::vector<double>> x(s.n_trials());
  for (std::size_t i = 0; i < s.n_trials(); ++i) {
    for (std::size_t c = 0; c < s.n_channels(); ++c) {
      for (std::size_t b = 0; b < 5; ++b) x[i].push_back(std::log(t.at(i, c, b) + 1e-12));
    }
  }
  return x;
}

TEST(Synthetic, NoEffectGivesChanceAccuracy) {
  const TrialSet s = generate_synthetic({.n_trials = 400, .n_channels = 3, .n_times = 500, .n_classes = 2,
                                         .effect_strength = 0.0, .seed = 17});
  const double acc = logistic_holdout_accuracy(log_band_features(s), s.labels);
  // 95% binomial interval around 0.5 for 200 test trials.
  EXPECT_NEAR(acc, 0.5, 1.96 * std::sqrt(0.25 / 200));
}

TEST(Synthetic, StrongEffectSeparatesClassesInDesignatedChannel) {
  const TrialSet s = generate_synthetic({.n_trials = 200, .n_channels = 3, .n_times = 500, .n_classes = 2,
                                         .effect_strength = 3.0, .seed = 4});
  const auto channels = s.metadata.at("class_channels").get<std::vector<std::size_t>>();
  ASSERT_EQ(channels.size(), 2u);
  const BandPowerTable t = band_powers(s);
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < s.n_trials(); ++i) (s.labels[i] == cls ? pos : neg).push_back(t.at(i, channels[cls], 1));
    EXPECT_GT(auc(pos, neg), 0.95) << "class " << cls;
  }
  EXPECT_GT(logistic_holdout_accuracy(log_band_features(s), s.labels), 0.9);
}

TEST(Synthetic, SameSeedIsBitIdenticalAndSeedsDiffer) {
  const SyntheticConfig cfg{.n_trials = 12, .n_channels = 4, .n_times = 256, .n_classes = 4, .seed = 99};
  const TrialSet a = generate_synthetic(cfg), b = generate_synthetic(cfg);
  ASSERT_EQ(a.data.size(), b.data.size());
  EXPECT_EQ(std::memcmp(a.data.ptr(), b.data.ptr(), a.data.size() * sizeof(float)), 0);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.metadata, b.metadata);
  SyntheticConfig other = cfg;
  other.seed = 100;
  const TrialSet c = generate_synthetic(other);
  EXPECT_NE(std::memcmp(a.data.ptr(), c.data.ptr(), a.data.size() * sizeof(float)), 0);
}

TEST(Synthetic, LabelsBalancedAndChannelMapDistinct) {
  for (std::size_t n : {10u, 101u, 403u}) {
    const TrialSet s = generate_synthetic({.n_trials = n, .n_channels = 22, .n_times = 64, .n_classes = 4, .seed = n});
    const auto counts = s.class_counts();
    EXPECT_LE(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()), 1u);
    const auto ch = s.metadata.at("class_channels").get<std::vector<std::size_t>>();
    EXPECT_EQ(std::set<std::size_t>(ch.begin(), ch.end()).size(), 4u);
    for (auto c : ch) EXPECT_LT(c, 22u);
  }
}

TEST(Synthetic, BackgroundIsPinkish) {
  // Spectrum falls with frequency: the 8-10 Hz band density exceeds 24-32 Hz.
  const TrialSet s = generate_synthetic({.n_trials = 40, .n_channels = 3, .n_times = 1000, .n_classes = 2,
                                         .effect_strength = 0.0, .seed = 8});
  const BandPowerTable t = band_powers(s);
  double low = 0.0, high = 0.0;
  for (std::size_t i = 0; i < s.n_trials(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      low += t.at(i, c, 0) / 2.0;   // 2 Hz wide
      high += t.at(i, c, 4) / 8.0;  // 8 Hz wide
    }
  }
  // 1/f: density ratio near 28/9.
  EXPECT_GT(low / high, 2.0);
  EXPECT_LT(low / high, 5.0);
}

TEST(Synthetic, RejectsMoreClassesThanChannels) {
  EXPECT_THROW(generate_synthetic({.n_trials = 8, .n_channels = 3, .n_times = 64, .n_classes = 4}), ConfigError);
  EXPECT_THROW(generate_synthetic({.n_trials = 8, .n_channels = 3, .n_times = 64, .n_classes = 2,
                                   .effect_strength = -1.0}),
               ConfigError);
}

// ---------------------------------------------------------- trial set I/O

TEST(TrialSetIo, SaveLoadIsBitExact) {
  TempDir dir("trialset");
  TrialSet s = generate_synthetic({.n_trials = 9, .n_channels = 3, .n_times = 50, .n_classes = 3, .seed = 1});
  s.data[0] = -0.0f;
  s.data[1] = std::numeric_limits<float>::denorm_min();
  s.data[2] = std::numeric_limits<float>::max();
  save_trialset(s, dir.path());
  const TrialSet r = load_trialset(dir.path());
  ASSERT_EQ(r.data.shape(), s.data.shape());
  EXPECT_EQ(std::memcmp(r.data.ptr(), s.data.ptr(), s.data.size() * sizeof(float)), 0);
  EXPECT_EQ(r.labels, s.labels);
  EXPECT_EQ(r.sfreq, s.sfreq);
  EXPECT_EQ(r.channel_names, s.channel_names);
  EXPECT_EQ(r.class_names, s.class_names);
  EXPECT_EQ(r.metadata, s.metadata);
}

TEST(TrialSetIo, TruncatedDataNamesByteCounts) {
  TempDir dir("trunc");
  const TrialSet s = generate_synthetic({.n_trials = 4, .n_channels = 2, .n_times = 16, .n_classes = 2});
  save_trialset(s, dir.path());
  std::filesystem::resize_file(dir / "data.bin", 100);
  try {
    load_trialset(dir.path());
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("512"), std::string::npos) << msg;
    EXPECT_NE(msg.find("100"), std::string::npos) << msg;
  }
}

TEST(TrialSetIo, UnknownVersionIsFormatError) {
  TempDir dir("version");
  const TrialSet s = generate_synthetic({.n_trials = 4, .n_channels = 2, .n_times = 16, .n_classes = 2});
  save_trialset(s, dir.path());
  std::ifstream in(dir / "manifest.json");
  auto m = nlohmann::json::parse(in);
  in.close();
  m["version"] = 42;
  std::ofstream(dir / "manifest.json") << m.dump();
  EXPECT_THROW(load_trialset(dir.path()), FormatError);
}

TEST(TrialSetIo, MissingDirectoryIsFormatError) {
  EXPECT_THROW(load_trialset("/nonexistent/stconv/trials"), FormatError);
}

TEST(TrialSetIo, CsvImportMatchesInMemoryFixture) {
  TempDir dir("csv");
  std::ofstream(dir / "index.csv") << "file,label\na.csv,1\nb.csv,0\n";
  std::ofstream(dir / "a.csv") << "1,2,3,4\n-1,-2,-3,-4\n";
  std::ofstream(dir / "b.csv") << "0.5,0.25,0.125,1e-3\n10,20,30,40\n";
  const TrialSet r = load_trialset(dir.path(), 128.0);
  const TrialSet expect = make_trials(2, 2, 4, {1, 2, 3, 4, -1, -2, -3, -4, 0.5f, 0.25f, 0.125f, 1e-3f, 10, 20, 30, 40},
                                      {1, 0}, 2, 128.0);
  ASSERT_EQ(r.data.shape(), expect.data.shape());
  for (std::size_t i = 0; i < r.data.size(); ++i) EXPECT_EQ(r.data[i], expect.data[i]) << i;
  EXPECT_EQ(r.labels, expect.labels);
  EXPECT_EQ(r.sfreq, 128.0);
  EXPECT_EQ(r.n_classes(), 2u);
}

TEST(TrialSetIo, RaggedCsvIsFormatError) {
  TempDir dir("ragged");
  std::ofstream(dir / "index.csv") << "file,label\na.csv,0\n";
  std::ofstream(dir / "a.csv") << "1,2,3\n4,5\n";
  EXPECT_THROW(load_trialset(dir.path()), FormatError);
}

TEST(TrialSet, ValidateCatchesBrokenInvariants) {
  TrialSet s = make_trials(2, 2, 3, std::vector<float>(12, 0.0f), {0, 1}, 2);
  EXPECT_NO_THROW(s.validate());
  s.labels[1] = 2;
  EXPECT_THROW(s.validate(), DataError);
  s.labels[1] = 1;
  s.channel_names[1] = s.channel_names[0];
  EXPECT_THROW(s.validate(), DataError);
}

// ------------------------------------------------------------------- splits

void expect_partition(const std::vector<Fold>& folds, std::size_t n) {
  std::vector<int> seen(n, 0);
  for (const auto& f : folds) {
    EXPECT_EQ(f.train.size() + f.test.size(), n);
    std::set<std::size_t> test(f.test.begin(), f.test.end());
    for (auto i : f.train) EXPECT_FALSE(test.contains(i));
    for (auto i : f.test) ++seen[i];
  }
  for (std::size_t i = 0; i < n; ++i) EXPECT_EQ(seen[i], 1) << "trial " << i;
}

void expect_stratified(const std::vector<Fold>& folds, const std::vector<int>& labels) {
  std::map<int, std::vector<std::size_t>> per_class;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    for (auto i : folds[f].test) {
      auto& v = per_class[labels[i]];
      v.resize(folds.size(), 0);
      ++v[f];
    }
  }
  for (auto& [cls, counts] : per_class) {
    counts.resize(folds.size(), 0);
    EXPECT_LE(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()), 1u)
        << "class " << cls;
  }
}

TEST(Splits, TenTrialsFiveFoldsOnePerClass) {
  const std::vector<int> labels = {0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
  const auto folds = stratified_kfold(labels, 5, 0);
  ASSERT_EQ(folds.size(), 5u);
  for (const auto& f : folds) {
    ASSERT_EQ(f.test.size(), 2u);
    EXPECT_NE(labels[f.test[0]], labels[f.test[1]]);
  }
  expect_partition(folds, 10);
}

TEST(Splits, UnevenClassesStayWithinOne) {
  std::vector<int> labels;
  for (int c = 0; c < 4; ++c) labels.insert(labels.end(), c == 3 ? 25 : 26, c);
  std::shuffle(labels.begin(), labels.end(), std::mt19937_64(1));
  const auto folds = stratified_kfold(labels, 5, 7);
  expect_partition(folds, 103);
  expect_stratified(folds, labels);
}

TEST(Splits, PropertyOverRandomLabelVectors) {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng() % 6, n_classes = 2 + rng() % 4;
    std::vector<int> labels;
    for (std::size_t c = 0; c < n_classes; ++c) labels.insert(labels.end(), k + rng() % 30, static_cast<int>(c));
    std::shuffle(labels.begin(), labels.end(), rng);
    const std::uint64_t seed = rng();
    const auto folds = stratified_kfold(labels, k, seed);
    ASSERT_EQ(folds.size(), k);
    expect_partition(folds, labels.size());
    expect_stratified(folds, labels);
    std::vector<std::size_t> sizes;
    for (const auto& f : folds) sizes.push_back(f.test.size());
    EXPECT_LE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()), 1u);
    const auto again = stratified_kfold(labels, k, seed);
    for (std::size_t f = 0; f < k; ++f) EXPECT_EQ(again[f].test, folds[f].test);
  }
}

TEST(Splits, SmallClassIsDataError) {
  const std::vector<int> labels = {0, 0, 0, 1, 1, 1, 1, 1};
  EXPECT_THROW(stratified_kfold(labels, 5, 0), DataError);
}

TEST(Splits, HoldoutSizesAndDisjointness) {
  IndexList idx(50);
  std::iota(idx.begin(), idx.end(), std::size_t{100});
  const auto [train, val] = holdout_split(idx, 0.2, 3);
  EXPECT_EQ(val.size(), 10u);
  EXPECT_EQ(train.size(), 40u);
  std::set<std::size_t> all(train.begin(), train.end());
  for (auto v : val) EXPECT_TRUE(all.insert(v).second);
  EXPECT_EQ(all, std::set<std::size_t>(idx.begin(), idx.end()));
  EXPECT_THROW(holdout_split(idx, 1.0, 0), ParameterError);
}

TEST(Splits, StratifiedHoldoutKeepsClassBalance) {
  std::vector<int> labels(200);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 4);
  IndexList idx(200);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto [train, val] = stratified_holdout_split(idx, labels, 0.2, 5);
  EXPECT_EQ(val.size(), 40u);
  std::vector<int> counts(4, 0);
  for (auto i : val) ++counts[labels[i]];
  for (int c : counts) EXPECT_EQ(c, 10);
  std::set<std::size_t> all(train.begin(), train.end());
  for (auto v : val) EXPECT_TRUE(all.insert(v).second);
  EXPECT_EQ(all.size(), 200u);
}

}  // namespace
}  // namespace stconv
