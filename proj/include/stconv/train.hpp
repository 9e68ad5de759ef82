#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stconv/model.hpp"
#include "stconv/optim.hpp"
#include "stconv/trialset.hpp"

namespace stconv {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 128;
  double weight_decay = 1e-4;
  std::size_t patience_epochs = 100;
  std::size_t max_epochs = 3000;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  // Throws ConfigError unless every field is positive (weight decay may be
  // zero), the betas lie in [0,1), and patience <= max_epochs.
  void validate() const;
  AdamConfig adam() const { return {lr, adam_beta1, adam_beta2, adam_eps, weight_decay}; }

  bool operator==(const TrainConfig&) const = default;
};

nlohmann::json train_config_to_json(const TrainConfig& config);
// Unknown keys and ill-typed values throw ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double duration_s = 0.0;   // training pass only
  double inclusive_s = 0.0;  // training pass + validation + checkpointing
};

enum class StopReason { kPatience, kMaxEpochs };

struct TrainRecord {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  StopReason stopped = StopReason::kMaxEpochs;
  double total_time_s = 0.0;

  double mean_epoch_s() const;
  double sum_epoch_s() const;
  double sum_inclusive_s() const;
  nlohmann::json to_json() const;
};

// Patience bookkeeping on a stream of validation losses. An epoch improves
// when its loss is strictly below the best so far.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  // Returns true when training should stop after `epoch` (1-based).
  bool update(std::size_t epoch, double val_loss);
  bool improved() const { return improved_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t best_epoch_ = 0;
  double best_loss_ = 0.0;
  bool improved_ = false;
};

template <typename T>
struct TrainResult {
  Model<T> model;  // best-validation checkpoint, in eval mode
  TrainRecord record;
};

// Progress hook, called after every epoch.
using EpochCallback = std::function<void(const EpochStats&)>;

// Mini-batch Adam on `train_set`, validating in eval mode after each epoch
// and keeping the parameters of the lowest validation loss. Throws DataError
// for empty or mismatched sets and NumericError when the loss or a gradient
// stops being finite.
template <typename T>
TrainResult<T> train(Model<T> model, const TrialSet& train_set, const TrialSet& val_set, const TrainConfig& config,
                     const EpochCallback& on_epoch = {});

// Trials as a [N,1,C,T] batch in the requested precision.
template <typename T>
NdArray<T> as_model_input(const TrialSet& trials);

// Mean cross-entropy and accuracy of eval-mode predictions.
struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};
template <typename T>
EvalResult evaluate(const Model<T>& model, const NdArray<T>& inputs, std::span<const int> labels);

}  // namespace stconv
