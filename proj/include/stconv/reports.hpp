#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stconv/representation.hpp"
#include "stconv/rsa.hpp"
#include "stconv/spectral.hpp"

namespace stconv {

// One model handed to the analysis pipeline.
struct AnalysisInput {
  std::string model_id;
  std::string model_type;
  const Model<float>* model = nullptr;
  Scaler scaler;
};

struct AnalysisOptions {
  RidgeConfig ridge;
  // Extra ridge strengths whose mean R^2 is reported alongside the main one.
  std::vector<double> sensitivity_lambdas{0.1, 1.0, 10.0};
  DistanceMetric metric = DistanceMetric::kCorrelation;
  std::size_t n_permutations = 1000;
  std::uint64_t seed = 0;
};

struct ModelAnalysis {
  std::string model_id;
  std::string model_type;
  NdArray<double> r2;  // [C, n_bands]
  KernelCorrelations correlations;
  std::vector<double> sensitivity_mean_r2;  // per AnalysisOptions::sensitivity_lambdas
};

struct AnalysisResults {
  std::vector<std::string> channel_names;
  std::vector<Band> bands;
  std::vector<double> sensitivity_lambdas;
  DistanceMetric metric = DistanceMetric::kCorrelation;
  std::vector<ModelAnalysis> models;
  Rdm rdm;
  // Present when the model types admit a within/between contrast.
  std::optional<PermutationTest> rsa;
};

// Band powers come from `trials` as given; each model sees the trials after
// its own scaler. Throws DimensionError when a model does not fit the data.
AnalysisResults analyze_models(std::span<const AnalysisInput> inputs, const TrialSet& trials,
                               const AnalysisOptions& options = {});

// Writes r2/<id>.csv, correlations/<id>.csv, correlation_summary.csv,
// rdm.csv, ridge_sensitivity.csv and rsa.json under `dir`. All numbers are
// printed in shortest round-trip form, so equal inputs give equal bytes.
void write_analysis(const AnalysisResults& results, const std::filesystem::path& dir);

// Columns: channel,band_lo,band_hi,r2 (one row per channel and band).
void write_r2_csv(const NdArray<double>& r2, std::span<const std::string> channel_names,
                  std::span<const Band> bands, const std::filesystem::path& path);
NdArray<double> read_r2_csv(const std::filesystem::path& path, std::vector<std::string>* channel_names = nullptr,
                            std::vector<Band>* bands = nullptr);

void write_rdm_csv(const Rdm& rdm, const std::filesystem::path& path);
Rdm read_rdm_csv(const std::filesystem::path& path);

// All correlation values of one model, in file order.
std::vector<double> read_correlation_values(const std::filesystem::path& path);

// Renders SVG figures from an analysis directory (and, when present, a
// performance table) into `out_dir`. Returns the files written.
std::vector<std::filesystem::path> render_reports(const std::filesystem::path& analysis_dir,
                                                  const std::optional<std::filesystem::path>& performance_csv,
                                                  const std::filesystem::path& out_dir);

}  // namespace stconv
