#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stconv/model.hpp"
#include "stconv/ndarray.hpp"
#include "stconv/scaler.hpp"
#include "stconv/spectral.hpp"
#include "stconv/trialset.hpp"

namespace stconv {

// Post-pooling activations of one model over a common trial set.
struct ActivationSet {
  std::string model_id;
  NdArray<double> activations;  // [N, K, P]

  std::size_t n_samples() const { return activations.dim(0); }
  std::size_t n_kernels() const { return activations.dim(1); }
  std::size_t n_steps() const { return activations.dim(2); }
  std::size_t width() const { return n_kernels() * n_steps(); }
  // Flattened activations of sample n (kernel-major).
  std::span<const double> flat(std::size_t n) const {
    return activations.data().subspan(n * width(), width());
  }

  // Throws DataError on non-finite values and DimensionError on a bad rank.
  void validate() const;
};

// Scales `trials` with `scaler` and records the model's eval-mode
// activations after pooling.
ActivationSet collect_activations(const Model<float>& model, const Scaler& scaler, const TrialSet& trials,
                                  std::string model_id);

struct RidgeConfig {
  double lambda = 1.0;
  std::size_t n_folds = 5;
  std::uint64_t seed = 0;
};

// Cross-validated ridge regression from flattened activations to every
// (channel, band) power. Predictors and targets are z-scored with
// training-fold statistics; R^2 = 1 - SS_res / SS_tot is pooled over the
// held-out folds. Returns [C, n_bands]. Throws DataError for N < 25 and
// DimensionError when the trial counts differ.
NdArray<double> reconstruct_band_power(const ActivationSet& acts, const BandPowerTable& bands,
                                       const RidgeConfig& config = {});

// Same regression for an arbitrary target matrix [N, n_targets]; returns one
// R^2 per target.
std::vector<double> cross_validated_r2(const NdArray<double>& predictors, const NdArray<double>& targets,
                                       const RidgeConfig& config = {});

struct KernelCorrelations {
  NdArray<double> r;  // [K, C, n_bands]
  double mean = 0.0;
  double std = 0.0;  // population std over all entries
  // Kernels whose per-trial mean activation is constant; their r is 0.
  std::vector<std::size_t> zero_variance_kernels;
};

// Pearson r across trials between each kernel's temporal-mean activation and
// each (channel, band) power.
KernelCorrelations kernel_feature_correlations(const ActivationSet& acts, const BandPowerTable& bands);

// Pearson correlation; 0 when either input has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

}  // namespace stconv
