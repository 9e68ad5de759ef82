#include "stconv/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include "stconv/detail/json_util.hpp"
#include "stconv/errors.hpp"

namespace stconv {
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (!(lr > 0.0)) fail("lr must be positive");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (patience_epochs == 0) fail("patience_epochs must be >= 1");
  if (max_epochs == 0) fail("max_epochs must be >= 1");
  if (patience_epochs > max_epochs) fail("patience_epochs must not exceed max_epochs");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    fail("adam betas must lie in [0,1)");
  }
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
}

json train_config_to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"batch_size", c.batch_size},
          {"weight_decay", c.weight_decay},
          {"patience_epochs", c.patience_epochs},
          {"max_epochs", c.max_epochs},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"adam_eps", c.adam_eps},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) throw ConfigError("train config must be a JSON object");
  auto number = [&](const char* key, double& field) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ConfigError(std::string("train config: '") + key + "' must be a number");
    field = j[key].get<double>();
  };
  auto count = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    if (!detail::is_count(j[key])) {
      throw ConfigError(std::string("train config: '") + key + "' must be a non-negative integer");
    }
    field = j[key].get<std::remove_reference_t<decltype(field)>>();
  };
  static const std::set<std::string> known = {"lr",         "batch_size", "weight_decay", "patience_epochs",
                                              "max_epochs", "adam_beta1", "adam_beta2",   "adam_eps",
                                              "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("train config: unknown key '" + key + "'");
  }
  number("lr", c.lr);
  count("batch_size", c.batch_size);
  number("weight_decay", c.weight_decay);
  count("patience_epochs", c.patience_epochs);
  count("max_epochs", c.max_epochs);
  number("adam_beta1", c.adam_beta1);
  number("adam_beta2", c.adam_beta2);
  number("adam_eps", c.adam_eps);
  count("seed", c.seed);
  c.validate();
  return c;
}

double TrainRecord::mean_epoch_s() const { return epochs.empty() ? 0.0 : sum_epoch_s() / epochs.size(); }

double TrainRecord::sum_epoch_s() const {
  double s = 0.0;
  for (const auto& e : epochs) s += e.duration_s;
  return s;
}

double TrainRecord::sum_inclusive_s() const {
  double s = 0.0;
  for (const auto& e : epochs) s += e.inclusive_s;
  return s;
}

json TrainRecord::to_json() const {
  json rows = json::array();
  for (const auto& e : epochs) {
    rows.push_back({{"epoch", e.epoch},
                    {"train_loss", e.train_loss},
                    {"val_loss", e.val_loss},
                    {"val_accuracy", e.val_accuracy},
                    {"duration_s", e.duration_s},
                    {"inclusive_s", e.inclusive_s}});
  }
  return {{"best_epoch", best_epoch},
          {"best_val_loss", best_val_loss},
          {"stopped_reason", stopped == StopReason::kPatience ? "patience" : "max_epochs"},
          {"n_epochs", epochs.size()},
          {"mean_epoch_s", mean_epoch_s()},
          {"total_time_s", total_time_s},
          {"epochs", rows}};
}

bool EarlyStopper::update(std::size_t epoch, double val_loss) {
  improved_ = best_epoch_ == 0 || val_loss < best_loss_;
  if (improved_) {
    best_epoch_ = epoch;
    best_loss_ = val_loss;
  }
  return epoch - best_epoch_ >= patience_;
}

template <typename T>
NdArray<T> as_model_input(const TrialSet& trials) {
  if (trials.n_trials() == 0) throw DataError("empty trial set");
  NdArray<T> out({trials.n_trials(), 1, trials.n_channels(), trials.n_times()});
  std::copy(trials.data.data().begin(), trials.data.data().end(), out.data().begin());
  return out;
}

template <typename T>
EvalResult evaluate(const Model<T>& model, const NdArray<T>& inputs, std::span<const int> labels) {
  const NdArray<T> logits = model.predict(inputs);
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) throw DataError("evaluate: label count does not match inputs");
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const T* row = logits.ptr() + i * k;
    const std::size_t arg = static_cast<std::size_t>(std::max_element(row, row + k) - row);
    const double mx = static_cast<double>(row[arg]);
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j) s += std::exp(static_cast<double>(row[j]) - mx);
    loss += std::log(s) + mx - static_cast<double>(row[labels[i]]);
    correct += arg == static_cast<std::size_t>(labels[i]);
  }
  return {loss / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n)};
}

template <typename T>
TrainResult<T> train(Model<T> model, const TrialSet& train_set, const TrialSet& val_set, const TrainConfig& config,
                     const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.n_trials() == 0 || val_set.n_trials() == 0) throw DataError("train: empty train or validation set");
  const auto& mc = model.config();
  for (const TrialSet* s : {&train_set, &val_set}) {
    if (s->n_channels() != mc.n_channels || s->n_times() != mc.n_times) {
      throw DimensionError("train: trials are " + std::to_string(s->n_channels()) + "x" +
                           std::to_string(s->n_times()) + " but the model expects " + std::to_string(mc.n_channels) +
                           "x" + std::to_string(mc.n_times));
    }
    for (int y : s->labels) {
      if (y < 0 || static_cast<std::size_t>(y) >= mc.n_classes) {
        throw DataError("train: label " + std::to_string(y) + " outside the model's " +
                        std::to_string(mc.n_classes) + " classes");
      }
    }
  }

  const auto start = Clock::now();
  const NdArray<T> x_train = as_model_input<T>(train_set);
  const NdArray<T> x_val = as_model_input<T>(val_set);
  const std::size_t n = train_set.n_trials(), per = mc.n_channels * mc.n_times;

  Rng shuffle_rng(config.seed);
  Rng dropout_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamState<T> adam;
  const AdamConfig adam_cfg = config.adam();
  EarlyStopper stopper(config.patience_epochs);
  TrainRecord record;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Model<T> best = model;
  std::vector<T> batch_buf;
  std::vector<int> batch_labels;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    model.set_mode(Mode::kTrain);
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (std::size_t first = 0; first < n; first += config.batch_size) {
      const std::size_t b = std::min(config.batch_size, n - first);
      batch_buf.resize(b * per);
      batch_labels.resize(b);
      for (std::size_t i = 0; i < b; ++i) {
        const std::size_t src = order[first + i];
        std::copy_n(x_train.ptr() + src * per, per, batch_buf.data() + i * per);
        batch_labels[i] = train_set.labels[src];
      }
      model.zero_grad();
      Tape<T> tape;
      Var xb = tape.constant(NdArray<T>({b, 1, mc.n_channels, mc.n_times}, std::vector<T>(batch_buf)));
      auto out = model.forward(tape, xb, dropout_rng);
      Var loss = ops::softmax_cross_entropy(tape, out.logits, batch_labels);
      const double lv = static_cast<double>(tape.value(loss)[0]);
      if (!std::isfinite(lv)) throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch));
      tape.backward(loss);
      adam_step(model.parameters(), adam, adam_cfg);
      loss_sum += lv * static_cast<double>(b);
    }
    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(n);
    stats.duration_s = seconds_since(epoch_start);

    model.set_mode(Mode::kEval);
    const EvalResult val = evaluate(model, x_val, val_set.labels);
    stats.val_loss = val.loss;
    stats.val_accuracy = val.accuracy;
    const bool stop = stopper.update(epoch, val.loss);
    if (stopper.improved()) {
      best = model;
      for (auto& p : best.parameters()) p.value.clear_grad();
    }
    stats.inclusive_s = seconds_since(epoch_start);
    record.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (stop) {
      record.stopped = StopReason::kPatience;
      break;
    }
  }
  record.best_epoch = stopper.best_epoch();
  record.best_val_loss = stopper.best_loss();
  record.total_time_s = seconds_since(start);
  best.set_mode(Mode::kEval);
  return {std::move(best), std::move(record)};
}

template NdArray<float> as_model_input(const TrialSet&);
template NdArray<double> as_model_input(const TrialSet&);
template EvalResult evaluate(const Model<float>&, const NdArray<float>&, std::span<const int>);
template EvalResult evaluate(const Model<double>&, const NdArray<double>&, std::span<const int>);
template TrainResult<float> train(Model<float>, const TrialSet&, const TrialSet&, const TrainConfig&,
                                  const EpochCallback&);
template TrainResult<double> train(Model<double>, const TrialSet&, const TrialSet&, const TrainConfig&,
                                   const EpochCallback&);

}  // namespace stconv
