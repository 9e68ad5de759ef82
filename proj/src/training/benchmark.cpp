#include "stconv/benchmark.hpp"

#include <algorithm>
#include <chrono>
#include <random>

#include "stconv/errors.hpp"
#include "stconv/optim.hpp"

namespace stconv {

TimingSummary summarize_timings(std::vector<double> seconds) {
  TimingSummary out;
  out.epoch_s = seconds;
  if (seconds.empty()) return out;
  std::sort(seconds.begin(), seconds.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(seconds.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, seconds.size() - 1);
    return seconds[lo] + (pos - static_cast<double>(lo)) * (seconds[hi] - seconds[lo]);
  };
  out.median = quantile(0.5);
  out.q1 = quantile(0.25);
  out.q3 = quantile(0.75);
  return out;
}

TimingSummary benchmark_epoch(const ModelConfig& config, const BenchmarkConfig& bench) {
  if (bench.warmup_epochs < 3) throw ConfigError("benchmark: at least 3 warm-up epochs are required");
  if (bench.n_epochs == 0 || bench.n_batches == 0 || bench.batch_size == 0) {
    throw ConfigError("benchmark: epochs, batches and batch size must be >= 1");
  }
  Model<float> model(config, bench.seed);
  const std::size_t C = config.n_channels, T = config.n_times, B = bench.batch_size;

  // The whole synthetic dataset is generated up front so no epoch touches
  // the generator or the disk.
  std::mt19937_64 rng(bench.seed + 1);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<NdArray<float>> batches;
  std::vector<std::vector<int>> labels;
  for (std::size_t b = 0; b < bench.n_batches; ++b) {
    NdArray<float> x({B, 1, C, T});
    for (auto& v : x.data()) v = g(rng);
    batches.push_back(std::move(x));
    std::vector<int> y(B);
    for (std::size_t i = 0; i < B; ++i) y[i] = static_cast<int>(i % config.n_classes);
    labels.push_back(std::move(y));
  }

  AdamState<float> adam;
  const AdamConfig adam_cfg;
  Rng dropout_rng(bench.seed + 2);
  std::vector<double> timed;
  for (std::size_t epoch = 0; epoch < bench.warmup_epochs + bench.n_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t b = 0; b < bench.n_batches; ++b) {
      model.zero_grad();
      Tape<float> tape;
      auto out = model.forward(tape, tape.constant(batches[b]), dropout_rng);
      Var loss = ops::softmax_cross_entropy(tape, out.logits, labels[b]);
      tape.backward(loss);
      adam_step(model.parameters(), adam, adam_cfg);
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (epoch >= bench.warmup_epochs) timed.push_back(s);
  }
  return summarize_timings(std::move(timed));
}

}  // namespace stconv
