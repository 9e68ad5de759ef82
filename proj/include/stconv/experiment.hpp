#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stconv/model.hpp"
#include "stconv/scaler.hpp"
#include "stconv/splits.hpp"
#include "stconv/train.hpp"
#include "stconv/trialset.hpp"

namespace stconv {

struct ExperimentConfig {
  std::vector<std::string> model_types = all_model_types();
  // Shape fields (channels, times, classes) are taken from the data.
  ModelConfig model;
  TrainConfig train;
  std::size_t n_folds = 5;
  double val_fraction = 0.2;
  std::uint64_t split_seed = 0;
  // Model initialization seed, shared by every fold of a type.
  std::uint64_t init_seed = 0;
  // Zero-phase band-pass applied to every trial before splitting.
  bool bandpass = true;
  double bandpass_low = 8.0;
  double bandpass_high = 32.0;
  std::size_t jobs = 1;
  // Keep trained models in the report (needed for in-process analysis).
  bool keep_models = false;
  // When set: checkpoints/, records/ and performance.csv are written here.
  std::optional<std::filesystem::path> out_dir;

  // Throws ConfigError.
  void validate() const;
};

nlohmann::json experiment_config_to_json(const ExperimentConfig& config);
// Keys absent from `j` keep their value in `base`; unknown keys throw ConfigError.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j, ExperimentConfig base = {});

struct RunResult {
  std::string model_type;
  std::size_t fold = 0;
  double test_accuracy = 0.0;
  double test_loss = 0.0;
  TrainRecord record;
  Scaler scaler;
  IndexList train_idx;
  IndexList val_idx;
  IndexList test_idx;
  std::optional<Model<float>> model;

  std::string run_id() const { return model_type + "_fold" + std::to_string(fold); }
};

struct ExperimentReport {
  std::vector<Fold> folds;
  // Ordered by model type (as configured), then fold.
  std::vector<RunResult> runs;
  // Majority-class-of-train predictor, per fold.
  std::vector<double> majority_accuracy;

  double mean_accuracy(const std::string& model_type) const;
  const RunResult& run(const std::string& model_type, std::size_t fold) const;
};

using RunCallback = std::function<void(const RunResult&)>;

// Stratified k-fold cross-validation of every configured model type on the
// same folds. Within each training fold a stratified validation split drives
// early stopping; the scaler is fit on the remaining training trials only and
// applied to train, validation and test. Test accuracy is that of the
// best-validation checkpoint.
ExperimentReport run_experiment(const TrialSet& trials, const ExperimentConfig& config,
                                const RunCallback& on_run = {});

// Columns: model,fold,accuracy,n_epochs,best_epoch,mean_epoch_s,total_s.
void write_performance_csv(const ExperimentReport& report, const std::filesystem::path& path);

struct PerformanceRow {
  std::string model;
  std::size_t fold = 0;
  double accuracy = 0.0;
  std::size_t n_epochs = 0;
  std::size_t best_epoch = 0;
  double mean_epoch_s = 0.0;
  double total_s = 0.0;
};

// Throws FormatError on a malformed file.
std::vector<PerformanceRow> read_performance_csv(const std::filesystem::path& path);

}  // namespace stconv
