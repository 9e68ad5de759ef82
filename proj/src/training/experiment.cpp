#include "stconv/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "stconv/checkpoint.hpp"
#include "stconv/detail/binio.hpp"
#include "stconv/detail/csv.hpp"
#include "stconv/detail/json_util.hpp"
#include "stconv/errors.hpp"
#include "stconv/filter.hpp"

namespace stconv {
namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("experiment config: " + msg); };
  if (model_types.empty()) fail("no model types");
  std::set<std::string> seen;
  for (const auto& t : model_types) {
    with_model_type(model, t);
    if (!seen.insert(t).second) fail("model type '" + t + "' listed twice");
  }
  if (n_folds < 2) fail("n_folds must be >= 2");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) fail("val_fraction must lie in (0,1)");
  if (bandpass && !(bandpass_low > 0.0 && bandpass_low < bandpass_high)) fail("band-pass edges must satisfy 0 < low < high");
  if (jobs == 0) fail("jobs must be >= 1");
  train.validate();
}

json experiment_config_to_json(const ExperimentConfig& c) {
  json j = {{"model_types", c.model_types},
            {"model", config_to_json(c.model)},
            {"train", train_config_to_json(c.train)},
            {"n_folds", c.n_folds},
            {"val_fraction", c.val_fraction},
            {"split_seed", c.split_seed},
            {"init_seed", c.init_seed},
            {"bandpass", c.bandpass},
            {"bandpass_low", c.bandpass_low},
            {"bandpass_high", c.bandpass_high},
            {"jobs", c.jobs}};
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j, ExperimentConfig c) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  static const std::set<std::string> known = {"model_types", "model",    "train",        "n_folds",
                                              "val_fraction", "split_seed", "init_seed", "bandpass",
                                              "bandpass_low", "bandpass_high", "jobs"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("experiment config: unknown key '" + key + "'");
  }
  auto count = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    if (!detail::is_count(j[key])) {
      throw ConfigError(std::string("experiment config: '") + key + "' must be a non-negative integer");
    }
    field = j[key].get<std::remove_reference_t<decltype(field)>>();
  };
  auto number = [&](const char* key, double& field) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ConfigError(std::string("experiment config: '") + key + "' must be a number");
    field = j[key].get<double>();
  };
  if (j.contains("model_types")) {
    const json& v = j["model_types"];
    if (!v.is_array()) throw ConfigError("experiment config: 'model_types' must be an array of strings");
    c.model_types.clear();
    for (const auto& t : v) {
      if (!t.is_string()) throw ConfigError("experiment config: 'model_types' must be an array of strings");
      c.model_types.push_back(t.get<std::string>());
    }
  }
  if (j.contains("model")) {
    json merged = config_to_json(c.model);
    if (!j["model"].is_object()) throw ConfigError("experiment config: 'model' must be an object");
    for (const auto& [key, value] : j["model"].items()) merged[key] = value;
    c.model = config_from_json(merged);
  }
  if (j.contains("train")) c.train = train_config_from_json(j["train"], c.train);
  count("n_folds", c.n_folds);
  number("val_fraction", c.val_fraction);
  count("split_seed", c.split_seed);
  count("init_seed", c.init_seed);
  if (j.contains("bandpass")) {
    if (!j["bandpass"].is_boolean()) throw ConfigError("experiment config: 'bandpass' must be a boolean");
    c.bandpass = j["bandpass"].get<bool>();
  }
  number("bandpass_low", c.bandpass_low);
  number("bandpass_high", c.bandpass_high);
  count("jobs", c.jobs);
  c.validate();
  return c;
}

double ExperimentReport::mean_accuracy(const std::string& model_type) const {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : runs) {
    if (r.model_type == model_type) {
      s += r.test_accuracy;
      ++n;
    }
  }
  if (n == 0) throw ContractError("no runs of model type '" + model_type + "'");
  return s / static_cast<double>(n);
}

const RunResult& ExperimentReport::run(const std::string& model_type, std::size_t fold) const {
  for (const auto& r : runs) {
    if (r.model_type == model_type && r.fold == fold) return r;
  }
  throw ContractError("no run " + model_type + "_fold" + std::to_string(fold));
}

namespace {

struct Job {
  std::string type;
  std::size_t fold;
};

// Test indices must never reach scaler fitting, training or validation.
void audit_indices(const IndexList& train, const IndexList& val, const IndexList& test, std::size_t n) {
  std::vector<char> owner(n, 0);
  for (const IndexList* list : {&train, &val, &test}) {
    for (std::size_t i : *list) {
      if (i >= n || owner[i]) throw ContractError("experiment: split index audit failed at trial " + std::to_string(i));
      owner[i] = 1;
    }
  }
}

double majority_accuracy(const TrialSet& trials, const Fold& fold) {
  std::vector<std::size_t> counts(trials.n_classes(), 0);
  for (std::size_t i : fold.train) ++counts[trials.labels[i]];
  const int majority = static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  std::size_t hits = 0;
  for (std::size_t i : fold.test) hits += trials.labels[i] == majority;
  return static_cast<double>(hits) / static_cast<double>(fold.test.size());
}

}  // namespace

ExperimentReport run_experiment(const TrialSet& raw, const ExperimentConfig& config, const RunCallback& on_run) {
  config.validate();
  raw.validate();
  const TrialSet trials = config.bandpass ? bandpass(raw, config.bandpass_low, config.bandpass_high) : raw;

  ModelConfig base = config.model;
  base.n_channels = trials.n_channels();
  base.n_times = trials.n_times();
  base.n_classes = trials.n_classes();
  base.validate();

  ExperimentReport report;
  report.folds = stratified_kfold(trials.labels, config.n_folds, config.split_seed);
  for (std::size_t k = 0; k < report.folds.size(); ++k) {
    // The validation split is stratified, so each class needs a trial for
    // fitting and one for validation.
    std::vector<std::size_t> counts(trials.n_classes(), 0);
    for (std::size_t i : report.folds[k].train) ++counts[trials.labels[i]];
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c] < 2) {
        throw DataError("experiment: fold " + std::to_string(k) + " leaves class " + std::to_string(c) + " with " +
                        std::to_string(counts[c]) + " training trial(s); a stratified validation split needs 2");
      }
    }
  }
  for (const auto& f : report.folds) report.majority_accuracy.push_back(majority_accuracy(trials, f));

  if (config.out_dir) {
    std::error_code ec;
    for (const char* sub : {"checkpoints", "records"}) {
      fs::create_directories(*config.out_dir / sub, ec);
      if (ec) throw FormatError("cannot create " + (*config.out_dir / sub).string() + ": " + ec.message());
    }
  }

  std::vector<Job> jobs;
  for (const auto& t : config.model_types) {
    for (std::size_t k = 0; k < report.folds.size(); ++k) jobs.push_back({t, k});
  }
  report.runs.resize(jobs.size());

  auto run_one = [&](std::size_t j) {
    const Job& job = jobs[j];
    const Fold& fold = report.folds[job.fold];
    RunResult r;
    r.model_type = job.type;
    r.fold = job.fold;
    // The validation split depends only on the fold, so every type sees the
    // same train/validation/test partition.
    auto [tr, va] = stratified_holdout_split(fold.train, trials.labels, config.val_fraction,
                                             config.split_seed + 1000003ULL * (job.fold + 1));
    r.train_idx = std::move(tr);
    r.val_idx = std::move(va);
    r.test_idx = fold.test;
    audit_indices(r.train_idx, r.val_idx, r.test_idx, trials.n_trials());

    r.scaler = Scaler::fit(trials, r.train_idx);
    const TrialSet train_set = r.scaler.apply(trials.subset(r.train_idx));
    const TrialSet val_set = r.scaler.apply(trials.subset(r.val_idx));
    const TrialSet test_set = r.scaler.apply(trials.subset(r.test_idx));

    const ModelConfig mc = with_model_type(base, job.type);
    auto result = train<float>(Model<float>(mc, config.init_seed), train_set, val_set, config.train);
    const EvalResult test = evaluate(result.model, as_model_input<float>(test_set), test_set.labels);
    r.test_accuracy = test.accuracy;
    r.test_loss = test.loss;
    r.record = std::move(result.record);

    if (config.out_dir) {
      CheckpointInfo info;
      info.scaler = r.scaler;
      info.extra = {{"model_type", r.model_type},
                    {"fold", r.fold},
                    {"test_accuracy", r.test_accuracy},
                    {"best_epoch", r.record.best_epoch},
                    {"bandpass", config.bandpass ? json{config.bandpass_low, config.bandpass_high} : json(nullptr)}};
      save_checkpoint(result.model, *config.out_dir / "checkpoints" / r.run_id(), info);
      json rec = r.record.to_json();
      rec["model_type"] = r.model_type;
      rec["fold"] = r.fold;
      rec["test_accuracy"] = r.test_accuracy;
      rec["test_loss"] = r.test_loss;
      rec["n_train"] = r.train_idx.size();
      rec["n_val"] = r.val_idx.size();
      rec["n_test"] = r.test_idx.size();
      detail::write_text(*config.out_dir / "records" / (r.run_id() + ".json"), rec.dump(2) + "\n");
    }
    if (config.keep_models) r.model = std::move(result.model);
    report.runs[j] = std::move(r);
  };

  std::mutex callback_mutex;
  auto finish = [&](std::size_t j) {
    if (on_run) {
      std::lock_guard lock(callback_mutex);
      on_run(report.runs[j]);
    }
  };

  const std::size_t n_workers = std::min(config.jobs, jobs.size());
  if (n_workers <= 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      run_one(j);
      finish(j);
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    {
      std::vector<std::jthread> workers;
      for (std::size_t w = 0; w < n_workers; ++w) {
        workers.emplace_back([&] {
          for (std::size_t j = next++; j < jobs.size(); j = next++) {
            try {
              run_one(j);
              finish(j);
            } catch (...) {
              std::lock_guard lock(error_mutex);
              if (!error) error = std::current_exception();
              next = jobs.size();
            }
          }
        });
      }
    }
    if (error) std::rethrow_exception(error);
  }

  if (config.out_dir) write_performance_csv(report, *config.out_dir / "performance.csv");
  return report;
}

void write_performance_csv(const ExperimentReport& report, const fs::path& path) {
  using detail::format_double;
  std::string out = "model,fold,accuracy,n_epochs,best_epoch,mean_epoch_s,total_s\n";
  for (const auto& r : report.runs) {
    out += r.model_type + "," + std::to_string(r.fold) + "," + format_double(r.test_accuracy) + "," +
           std::to_string(r.record.epochs.size()) + "," + std::to_string(r.record.best_epoch) + "," +
           format_double(r.record.mean_epoch_s()) + "," + format_double(r.record.total_time_s) + "\n";
  }
  for (std::size_t k = 0; k < report.majority_accuracy.size(); ++k) {
    out += "majority," + std::to_string(k) + "," + format_double(report.majority_accuracy[k]) + ",0,0,0,0\n";
  }
  detail::write_text(path, out);
}

std::vector<PerformanceRow> read_performance_csv(const fs::path& path) {
  std::istringstream is(detail::read_text(path));
  std::string line;
  if (!std::getline(is, line) || detail::split_csv_line(line) != std::vector<std::string>{"model", "fold", "accuracy",
                                                                                        "n_epochs", "best_epoch",
                                                                                        "mean_epoch_s", "total_s"}) {
    throw FormatError(path.string() + ": unexpected performance table header");
  }
  std::vector<PerformanceRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto c = detail::split_csv_line(line);
    if (c.size() != 7) throw FormatError(path.string() + ": expected 7 columns in '" + line + "'");
    rows.push_back({c[0], detail::parse_count(c[1], path), detail::parse_double(c[2], path),
                    detail::parse_count(c[3], path), detail::parse_count(c[4], path), detail::parse_double(c[5], path),
                    detail::parse_double(c[6], path)});
  }
  return rows;
}

}  // namespace stconv
