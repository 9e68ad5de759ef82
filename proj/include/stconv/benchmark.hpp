#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "stconv/model.hpp"
#include "stconv/train.hpp"

namespace stconv {

struct BenchmarkConfig {
  std::size_t batch_size = 128;
  std::size_t n_batches = 1;  // per epoch
  std::size_t n_epochs = 20;  // timed epochs, after warm-up
  std::size_t warmup_epochs = 3;
  std::uint64_t seed = 0;
};

struct TimingSummary {
  std::vector<double> epoch_s;  // timed epochs only
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr() const { return q3 - q1; }
};

// Median and quartiles (linear interpolation between order statistics).
TimingSummary summarize_timings(std::vector<double> seconds);

// Times full training epochs (forward, backward, Adam step) of a float32
// model on random trials resident in memory. Warm-up epochs are run and
// discarded. Throws ConfigError for fewer than 3 warm-up or 1 timed epoch.
TimingSummary benchmark_epoch(const ModelConfig& model, const BenchmarkConfig& config);

}  // namespace stconv
