#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>

#include "stconv/benchmark.hpp"
#include "stconv/checkpoint.hpp"
#include "stconv/detail/csv.hpp"
#include "stconv/detail/json_util.hpp"
#include "stconv/errors.hpp"
#include "stconv/filter.hpp"
#include "stconv/reports.hpp"
#include "stconv/trialset.hpp"

namespace stconv::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ------------------------------------------------------------------ config

void RunConfig::validate() const {
  if (data && synthetic) throw ConfigError("run config: 'data' and 'synthetic' are mutually exclusive");
  if (!(csv_sfreq > 0.0)) throw ConfigError("run config: 'csv_sfreq' must be positive");
  experiment.validate();
}

json synthetic_config_to_json(const SyntheticConfig& c) {
  return {{"channels", c.n_channels}, {"trials", c.n_trials}, {"classes", c.n_classes}, {"length", c.n_times},
          {"sfreq", c.sfreq},         {"effect", c.effect_strength}, {"seed", c.seed}};
}

SyntheticConfig synthetic_config_from_json(const json& j, SyntheticConfig c) {
  if (!j.is_object()) throw ConfigError("synthetic config must be a JSON object");
  static const std::set<std::string> known = {"channels", "trials", "classes", "length", "sfreq", "effect", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("synthetic config: unknown key '" + key + "'");
  }
  auto count = [&](const char* key, auto& field) {
    if (!j.contains(key)) return;
    if (!detail::is_count(j[key])) {
      throw ConfigError(std::string("synthetic config: '") + key + "' must be a non-negative integer");
    }
    field = j[key].get<std::remove_reference_t<decltype(field)>>();
  };
  auto number = [&](const char* key, double& field) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ConfigError(std::string("synthetic config: '") + key + "' must be a number");
    field = j[key].get<double>();
  };
  count("channels", c.n_channels);
  count("trials", c.n_trials);
  count("classes", c.n_classes);
  count("length", c.n_times);
  number("sfreq", c.sfreq);
  number("effect", c.effect_strength);
  count("seed", c.seed);
  return c;
}

json run_config_to_json(const RunConfig& c) {
  json j = json::object();
  if (c.data) j["data"] = c.data->string();
  j["csv_sfreq"] = c.csv_sfreq;
  if (c.synthetic) j["synthetic"] = synthetic_config_to_json(*c.synthetic);
  j["experiment"] = experiment_config_to_json(c.experiment);
  if (c.out) j["out"] = c.out->string();
  if (c.seed) j["seed"] = *c.seed;
  return j;
}

namespace {

void apply_seed(RunConfig& c, std::uint64_t seed) {
  c.seed = seed;
  if (c.synthetic) c.synthetic->seed = seed;
  c.experiment.split_seed = seed;
  c.experiment.init_seed = seed;
  c.experiment.train.seed = seed;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  static const std::set<std::string> known = {"data", "csv_sfreq", "synthetic", "experiment", "out", "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("run config: unknown key '" + key + "'");
  }
  RunConfig c;
  auto path = [&](const char* key) -> std::optional<fs::path> {
    if (!j.contains(key)) return std::nullopt;
    if (!j[key].is_string()) throw ConfigError(std::string("run config: '") + key + "' must be a string");
    return fs::path(j[key].get<std::string>());
  };
  c.data = path("data");
  c.out = path("out");
  if (j.contains("csv_sfreq")) {
    if (!j["csv_sfreq"].is_number()) throw ConfigError("run config: 'csv_sfreq' must be a number");
    c.csv_sfreq = j["csv_sfreq"].get<double>();
  }
  if (j.contains("synthetic")) c.synthetic = SyntheticConfig{};
  if (j.contains("seed")) {
    if (!detail::is_count(j["seed"])) throw ConfigError("run config: 'seed' must be a non-negative integer");
    apply_seed(c, j["seed"].get<std::uint64_t>());
  }
  if (c.synthetic) c.synthetic = synthetic_config_from_json(j["synthetic"], *c.synthetic);
  if (j.contains("experiment")) c.experiment = experiment_config_from_json(j["experiment"], c.experiment);
  c.validate();
  return c;
}

RunConfig read_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

RunConfig desk_scale_config() {
  RunConfig c;
  c.synthetic = SyntheticConfig{.n_trials = 1280, .n_channels = 22, .n_times = 250, .sfreq = 250.0, .n_classes = 4,
                                .effect_strength = 0.5, .seed = 1};
  c.experiment.train.max_epochs = 100;
  c.experiment.train.patience_epochs = 50;
  return c;
}

std::uint64_t file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  std::uint64_t h = 14695981039346656037ull;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

namespace {

// ----------------------------------------------------------------- helpers

std::string hex64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Input files of a TrialSet or checkpoint directory, with checksums.
json describe_inputs(const fs::path& dir) {
  json files = json::array();
  std::vector<fs::path> paths;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) files.push_back({{"file", p.filename().string()}, {"fnv1a64", hex64(file_checksum(p))}});
  return {{"path", dir.string()}, {"files", files}};
}

// Lists every file below `dir` (except the manifest itself) so that a run
// directory documents its own contents.
void write_manifest(const fs::path& dir, const std::string& command, const json& inputs, const json& seeds,
                    const json& config) {
  std::vector<std::string> outputs;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string rel = fs::relative(e.path(), dir).generic_string();
    if (rel != "run_manifest.json") outputs.push_back(rel);
  }
  std::sort(outputs.begin(), outputs.end());
  write_json({{"tool", "stconv"},
              {"version", kToolVersion},
              {"command", command},
              {"inputs", inputs},
              {"seeds", seeds},
              {"config", config},
              {"outputs", outputs}},
             dir / "run_manifest.json");
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create directory " + dir.string() + ": " + ec.message());
}

TrialSet load_data(const fs::path& dir, double csv_sfreq) {
  if (!fs::exists(dir)) throw DataError("data directory not found: " + dir.string());
  return load_trialset(dir, csv_sfreq);
}

void print_summary(const TrialSet& s, std::ostream& out) {
  out << "trials " << s.n_trials() << ", channels " << s.n_channels() << ", samples " << s.n_times() << " at "
      << s.sfreq << " Hz\nclass counts:";
  const auto counts = s.class_counts();
  for (std::size_t k = 0; k < counts.size(); ++k) out << ' ' << s.class_names[k] << '=' << counts[k];
  out << '\n';
}

std::vector<std::string> parse_model_selection(const std::string& spec) {
  if (spec == "all") return all_model_types();
  std::vector<std::string> types;
  std::stringstream ss(spec);
  for (std::string t; std::getline(ss, t, ',');) {
    if (std::find(all_model_types().begin(), all_model_types().end(), t) == all_model_types().end()) {
      throw ConfigError("unknown model type '" + t + "' (expected cnn1d, cnn2d, conf1d, conf2d or all)");
    }
    types.push_back(t);
  }
  if (types.empty()) throw ConfigError("no model type selected");
  return types;
}

std::pair<std::size_t, std::size_t> parse_shape(const std::string& s) {
  const auto x = s.find('x');
  std::size_t c = 0, t = 0;
  const char* end = s.data() + s.size();
  if (x == std::string::npos || std::from_chars(s.data(), s.data() + x, c).ptr != s.data() + x ||
      std::from_chars(s.data() + x + 1, end, t).ptr != end || c == 0 || t == 0) {
    throw ConfigError("data shape must look like CxT (e.g. 22x1000), got '" + s + "'");
  }
  return {c, t};
}

// --------------------------------------------------------------- commands

struct GenDataArgs {
  RunConfig run;
};

void cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
  if (!a.run.out) throw ConfigError("gen-data: --out is required");
  const SyntheticConfig cfg = a.run.synthetic.value_or(SyntheticConfig{});
  const TrialSet s = generate_synthetic(cfg);
  save_trialset(s, *a.run.out);
  out << "wrote " << a.run.out->string() << '\n';
  print_summary(s, out);
}

void cmd_train(const RunConfig& run, std::ostream& out) {
  if (!run.out) throw ConfigError("train: --out is required");
  TrialSet data;
  json inputs;
  if (run.data) {
    data = load_data(*run.data, run.csv_sfreq);
    inputs = describe_inputs(*run.data);
  } else {
    const SyntheticConfig cfg = run.synthetic.value_or(SyntheticConfig{});
    data = generate_synthetic(cfg);
    inputs = {{"synthetic", synthetic_config_to_json(cfg)}};
  }
  print_summary(data, out);
  ExperimentConfig exp = run.experiment;
  exp.out_dir = *run.out;
  ensure_dir(*run.out);
  write_json(run_config_to_json(run), *run.out / "config.json");
  const ExperimentReport report = run_experiment(data, exp, [&](const RunResult& r) {
    out << std::left << std::setw(14) << r.run_id() << " accuracy " << fixed(r.test_accuracy, 3) << "  best epoch "
        << r.record.best_epoch << '/' << r.record.epochs.size() << "  " << fixed(r.record.mean_epoch_s(), 3)
        << " s/epoch\n"
        << std::flush;
  });
  for (const auto& t : exp.model_types) out << t << " mean accuracy " << fixed(report.mean_accuracy(t), 3) << '\n';
  double majority = 0.0;
  for (double m : report.majority_accuracy) majority += m;
  out << "majority-class baseline " << fixed(majority / static_cast<double>(report.majority_accuracy.size()), 3)
      << '\n';
  write_manifest(*run.out, "train", inputs,
                 {{"split_seed", exp.split_seed}, {"init_seed", exp.init_seed}, {"train_seed", exp.train.seed}},
                 run_config_to_json(run));
}

struct BenchArgs {
  std::vector<std::string> shapes{"22x1000", "3x1000"};
  std::string models = "cnn1d,cnn2d";
  std::size_t epochs = 30;
  std::size_t warmup = 3;
  std::size_t batch_size = 128;
  std::size_t batches = 1;
  std::size_t kernels = 40;
  std::size_t kernel_len = 25;
  std::size_t pool = 100;
  std::size_t classes = 4;
  std::uint64_t seed = 0;
  fs::path out;
};

void cmd_bench(const BenchArgs& a, std::ostream& out) {
  const std::vector<std::string> types = parse_model_selection(a.models);
  ensure_dir(a.out);
  out << "bench runs one model at a time (jobs=1)\n";
  std::ostringstream csv;
  csv << "shape,model,channels,times,kernels,kernel_len,batch_size,epochs,median_s,q1_s,q3_s,iqr_s,encoder_macs,"
         "mac_ratio,ratio\n";
  for (const auto& shape : a.shapes) {
    const auto [c, t] = parse_shape(shape);
    ModelConfig base;
    base.n_channels = c;
    base.n_times = t;
    base.n_classes = a.classes;
    base.n_kernels = a.kernels;
    base.kernel_len = a.kernel_len;
    base.pool_size = a.pool;
    base.validate();
    const MacCounts macs = count_macs(base);
    std::map<std::string, TimingSummary> timings;
    for (const auto& type : types) {
      const ModelConfig m = with_model_type(base, type);
      timings[type] = benchmark_epoch(m, {.batch_size = a.batch_size,
                                          .n_batches = a.batches,
                                          .n_epochs = a.epochs,
                                          .warmup_epochs = a.warmup,
                                          .seed = a.seed});
      out << shape << ' ' << std::left << std::setw(6) << type << " median " << fixed(timings[type].median, 4)
          << " s/epoch  IQR " << fixed(timings[type].iqr(), 4) << '\n'
          << std::flush;
    }
    for (const auto& type : types) {
      const ModelConfig m = with_model_type(base, type);
      const bool separate = m.conv_mode == ConvMode::kSeparate1d;
      const std::string head = m.head == HeadKind::kDense ? "cnn" : "conf";
      std::string ratio;
      if (timings.contains(head + "1d") && timings.contains(head + "2d")) {
        ratio = detail::format_double(timings[head + "1d"].median / timings[head + "2d"].median);
        if (type == head + "1d") {
          out << shape << ' ' << head << " 1D/2D median ratio " << ratio << " (MAC ratio "
              << detail::format_double(macs.ratio()) << ")\n";
        }
      }
      const TimingSummary& s = timings[type];
      csv << shape << ',' << type << ',' << c << ',' << t << ',' << a.kernels << ',' << a.kernel_len << ','
          << a.batch_size << ',' << a.epochs << ',' << detail::format_double(s.median) << ','
          << detail::format_double(s.q1) << ',' << detail::format_double(s.q3) << ','
          << detail::format_double(s.iqr()) << ',' << (separate ? macs.encoder_1d : macs.encoder_2d) << ','
          << detail::format_double(macs.ratio()) << ',' << ratio << '\n';
    }
  }
  std::ofstream f(a.out / "bench.csv");
  if (!f) throw FormatError("cannot write " + (a.out / "bench.csv").string());
  f << csv.str();
  json cfg = {{"shapes", a.shapes}, {"models", types},       {"epochs", a.epochs},   {"warmup", a.warmup},
              {"batch_size", a.batch_size}, {"batches", a.batches}, {"kernels", a.kernels},
              {"kernel_len", a.kernel_len}, {"pool", a.pool},   {"classes", a.classes}, {"jobs", 1}};
  write_json(cfg, a.out / "config.json");
  write_manifest(a.out, "bench", json::array(), {{"seed", a.seed}}, cfg);
  out << "wrote " << (a.out / "bench.csv").string() << '\n';
}

struct FuseArgs {
  fs::path checkpoint;
  fs::path out;
  std::size_t inputs = 200;
  std::uint64_t seed = 0;
};

void cmd_fuse(const FuseArgs& a, std::ostream& out) {
  CheckpointInfo info;
  Model<float> source = load_checkpoint(a.checkpoint, &info);
  source.set_mode(Mode::kEval);
  // Fusing in double keeps the only rounding at the final cast to float.
  Model<float> fused = fuse_1d_to_2d(source.cast<double>()).cast<float>();
  fused.set_mode(Mode::kEval);

  const ModelConfig& cfg = source.config();
  NdArray<float> x({a.inputs, 1, cfg.n_channels, cfg.n_times});
  std::mt19937_64 rng(a.seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (auto& v : x.data()) v = normal(rng);
  const NdArray<float> ya = source.predict(x), yb = fused.predict(x);
  double max_dev = 0.0, max_abs = 0.0;
  for (std::size_t i = 0; i < ya.size(); ++i) {
    max_dev = std::max(max_dev, std::abs(static_cast<double>(ya[i]) - yb[i]));
    max_abs = std::max(max_abs, std::abs(static_cast<double>(ya[i])));
  }
  if (!std::isfinite(max_dev)) throw NumericError("fuse: non-finite logits");

  CheckpointInfo fused_info = info;
  fused_info.extra["model_type"] = model_type_name(fused.config());
  fused_info.extra["fused_from"] = a.checkpoint.string();
  save_checkpoint(fused, a.out, fused_info);
  const json cfg_json = {{"checkpoint", a.checkpoint.string()}, {"inputs", a.inputs}, {"seed", a.seed}};
  write_manifest(a.out, "fuse", describe_inputs(a.checkpoint), {{"seed", a.seed}}, cfg_json);
  out << "fused " << model_type_name(source.config()) << " -> " << model_type_name(fused.config()) << ", wrote "
      << a.out.string() << '\n'
      << "max |logit deviation| " << detail::format_double(max_dev) << " (relative "
      << detail::format_double(max_abs > 0.0 ? max_dev / max_abs : 0.0) << ") over " << a.inputs
      << " random inputs\n";
}

struct AnalyzeArgs {
  std::vector<fs::path> checkpoints;
  fs::path data;
  fs::path out;
  double csv_sfreq = 250.0;
  std::size_t permutations = 1000;
  std::uint64_t seed = 0;
  double lambda = 1.0;
  std::size_t folds = 5;
  std::string metric = "correlation";
};

// A path is a checkpoint directory, a directory of checkpoint directories,
// or a training run directory holding checkpoints/.
std::vector<fs::path> expand_checkpoints(const std::vector<fs::path>& paths) {
  std::vector<fs::path> found;
  for (const auto& p : paths) {
    if (!fs::is_directory(p)) throw DataError("checkpoint directory not found: " + p.string());
    if (fs::exists(p / "manifest.json")) {
      found.push_back(p);
      continue;
    }
    const fs::path root = fs::is_directory(p / "checkpoints") ? p / "checkpoints" : p;
    std::vector<fs::path> inner;
    for (const auto& e : fs::directory_iterator(root)) {
      if (e.is_directory() && fs::exists(e.path() / "manifest.json")) inner.push_back(e.path());
    }
    if (inner.empty()) throw DataError("no checkpoints under " + p.string());
    std::sort(inner.begin(), inner.end());
    found.insert(found.end(), inner.begin(), inner.end());
  }
  return found;
}

void cmd_analyze(const AnalyzeArgs& a, std::ostream& out) {
  if (a.metric != "correlation" && a.metric != "euclidean") {
    throw ConfigError("--metric must be correlation or euclidean");
  }
  const std::vector<fs::path> dirs = expand_checkpoints(a.checkpoints);
  std::vector<Model<float>> models;
  std::vector<AnalysisInput> inputs;
  models.reserve(dirs.size());
  std::optional<json> bandpass_edges;
  std::set<std::string> ids;
  TrialSet raw = load_data(a.data, a.csv_sfreq);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    CheckpointInfo info;
    models.push_back(load_checkpoint(dirs[i], &info));
    models.back().set_mode(Mode::kEval);
    const json edges = info.extra.value("bandpass", json(nullptr));
    if (i == 0) {
      bandpass_edges = edges;
    } else if (edges != *bandpass_edges) {
      throw ConfigError("checkpoints were trained with different band-pass settings");
    }
    std::string id = dirs[i].filename().string();
    if (!ids.insert(id).second) throw ConfigError("duplicate checkpoint name '" + id + "'");
    std::string type = info.extra.value("model_type", model_type_name(models.back().config()));
    if (!info.scaler) {
      out << "warning: " << id << " has no stored scaler, fitting one on the analysis data\n";
    }
    inputs.push_back({id, type, &models.back(), info.scaler.value_or(Scaler::fit(raw))});
  }
  TrialSet data = raw;
  if (bandpass_edges && bandpass_edges->is_array() && bandpass_edges->size() == 2) {
    data = bandpass(raw, (*bandpass_edges)[0].get<double>(), (*bandpass_edges)[1].get<double>());
  }
  AnalysisOptions opts;
  opts.ridge = {.lambda = a.lambda, .n_folds = a.folds, .seed = a.seed};
  opts.metric = a.metric == "euclidean" ? DistanceMetric::kEuclidean : DistanceMetric::kCorrelation;
  opts.n_permutations = a.permutations;
  opts.seed = a.seed;
  const AnalysisResults res = analyze_models(inputs, data, opts);
  ensure_dir(a.out);
  write_analysis(res, a.out);

  for (const auto& m : res.models) {
    double mean_r2 = 0.0;
    for (double v : m.r2.data()) mean_r2 += v;
    mean_r2 /= static_cast<double>(m.r2.size());
    out << std::left << std::setw(14) << m.model_id << " mean R2 " << fixed(mean_r2, 3) << "  correlation mean "
        << fixed(m.correlations.mean, 3) << " sd " << fixed(m.correlations.std, 3) << '\n';
  }
  if (res.rsa) {
    out << "RDM within-type mean " << fixed(res.rsa->observed.within_mean, 4) << ", between-type mean "
        << fixed(res.rsa->observed.between_mean, 4) << ", gap " << fixed(res.rsa->observed.gap, 4) << ", p "
        << fixed(res.rsa->p_value, 4) << '\n';
  }
  std::vector<std::string> ckpts;
  for (const auto& d : dirs) ckpts.push_back(d.string());
  const json cfg = {{"checkpoints", ckpts},       {"data", a.data.string()}, {"permutations", a.permutations},
                    {"seed", a.seed},             {"lambda", a.lambda},      {"folds", a.folds},
                    {"metric", a.metric},         {"bandpass", bandpass_edges.value_or(json(nullptr))}};
  write_json(cfg, a.out / "config.json");
  json in = json::array({describe_inputs(a.data)});
  for (const auto& d : dirs) in.push_back(describe_inputs(d));
  write_manifest(a.out, "analyze", in, {{"seed", a.seed}}, cfg);
  out << "wrote " << a.out.string() << '\n';
}

struct ReportArgs {
  fs::path in;
  std::optional<fs::path> performance;
  fs::path out;
};

void cmd_report(const ReportArgs& a, std::ostream& out) {
  if (!fs::is_directory(a.in)) throw DataError("analysis directory not found: " + a.in.string());
  if (a.performance && !fs::exists(*a.performance)) {
    throw DataError("performance table not found: " + a.performance->string());
  }
  ensure_dir(a.out);
  const auto files = render_reports(a.in, a.performance, a.out);
  for (const auto& f : files) out << "wrote " << f.string() << '\n';
}

struct ReproArgs {
  std::optional<fs::path> config;
  fs::path out;
  std::optional<std::size_t> jobs;
  bool quick = false;
  bool skip_bench = false;
};

void cmd_repro(const ReproArgs& a, std::ostream& out) {
  RunConfig run = a.config ? read_run_config(*a.config) : desk_scale_config();
  if (a.quick) {
    run.synthetic = SyntheticConfig{.n_trials = 60, .n_channels = 4, .n_times = 250, .n_classes = 2,
                                    .effect_strength = 2.0, .seed = run.seed.value_or(1)};
    run.experiment.model.pool_size = 50;
    run.experiment.n_folds = 2;
    run.experiment.train.max_epochs = 3;
    run.experiment.train.patience_epochs = 3;
    run.experiment.train.lr = 1e-3;
  }
  if (a.jobs) run.experiment.jobs = *a.jobs;
  ensure_dir(a.out);

  const fs::path data_dir = a.out / "data";
  if (run.data) {
    out << "== data: using " << run.data->string() << '\n';
  } else {
    out << "== gen-data\n";
    GenDataArgs g{run};
    g.run.out = data_dir;
    cmd_gen_data(g, out);
    run.data = data_dir;
    run.synthetic.reset();
  }
  out << "== train\n";
  RunConfig tr = run;
  tr.out = a.out / "train";
  cmd_train(tr, out);

  if (!a.skip_bench) {
    out << "== bench\n";
    BenchArgs b;
    b.out = a.out / "bench";
    if (a.quick) {
      b.shapes = {"4x250"};
      b.epochs = 3;
      b.pool = 50;
      b.batch_size = 16;
    }
    cmd_bench(b, out);
  }
  out << "== analyze\n";
  AnalyzeArgs an;
  an.checkpoints = {a.out / "train"};
  an.data = *run.data;
  an.csv_sfreq = run.csv_sfreq;
  an.out = a.out / "analysis";
  an.seed = run.seed.value_or(0);
  if (a.quick) an.permutations = 50;
  cmd_analyze(an, out);

  out << "== report\n";
  cmd_report({a.out / "analysis", a.out / "train" / "performance.csv", a.out / "report"}, out);
  write_json(run_config_to_json(run), a.out / "config.json");
  write_manifest(a.out, "repro", json::array(), {{"seed", run.seed ? json(*run.seed) : json(nullptr)}},
                 run_config_to_json(run));
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const DimensionError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) {
    return 2;
  }
  return 1;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Separate-1D versus fused-2D spatiotemporal convolution toolkit for EEG models", "stconv"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic trial set");
  std::optional<fs::path> gen_config;
  SyntheticConfig syn;
  std::optional<fs::path> gen_out;
  gen->add_option("--config", gen_config, "JSON run config (its 'synthetic' and 'seed' keys are used)");
  auto* o_channels = gen->add_option("--channels", syn.n_channels, "Channels")->capture_default_str();
  auto* o_trials = gen->add_option("--trials", syn.n_trials, "Trials")->capture_default_str();
  auto* o_classes = gen->add_option("--classes", syn.n_classes, "Classes")->capture_default_str();
  auto* o_length = gen->add_option("--length", syn.n_times, "Samples per trial")->capture_default_str();
  auto* o_sfreq = gen->add_option("--sfreq", syn.sfreq, "Sampling rate in Hz")->capture_default_str();
  auto* o_effect = gen->add_option("--effect", syn.effect_strength, "Class effect strength")->capture_default_str();
  auto* o_gseed = gen->add_option("--seed", syn.seed, "Random seed")->capture_default_str();
  gen->add_option("--out", gen_out, "Output directory");

  // train
  auto* trn = app.add_subcommand("train", "Cross-validate model types and write checkpoints");
  std::optional<fs::path> tr_config, tr_data, tr_out;
  std::string tr_models;
  std::size_t tr_folds = 5, tr_jobs = 1, tr_epochs = 0, tr_patience = 0, tr_batch = 0;
  double tr_lr = 0.0, tr_csv_sfreq = 250.0;
  std::uint64_t tr_seed = 0;
  trn->add_option("--config", tr_config, "JSON run config");
  trn->add_option("--data", tr_data, "TrialSet directory (or CSV import directory)");
  auto* o_csv = trn->add_option("--csv-sfreq", tr_csv_sfreq, "Sampling rate for CSV imports");
  auto* o_models = trn->add_option("--model", tr_models, "cnn1d, cnn2d, conf1d, conf2d, a comma list, or all");
  auto* o_folds = trn->add_option("--folds", tr_folds, "Cross-validation folds");
  auto* o_jobs = trn->add_option("--jobs", tr_jobs, "Runs trained in parallel");
  auto* o_epochs = trn->add_option("--epochs", tr_epochs, "Maximum epochs");
  auto* o_patience = trn->add_option("--patience", tr_patience, "Early-stopping patience in epochs");
  auto* o_lr = trn->add_option("--lr", tr_lr, "Adam learning rate");
  auto* o_batch = trn->add_option("--batch-size", tr_batch, "Mini-batch size");
  auto* o_tseed = trn->add_option("--seed", tr_seed, "Seed for splits, initialization and batch order");
  trn->add_option("--out", tr_out, "Run directory");

  // bench
  auto* bch = app.add_subcommand("bench", "Time training epochs of 1D and 2D encoders");
  BenchArgs bench;
  bch->add_option("--data-shape", bench.shapes, "CxT shapes to benchmark")->capture_default_str();
  bch->add_option("--models", bench.models, "Model types, comma separated, or all")->capture_default_str();
  bch->add_option("--epochs", bench.epochs, "Timed epochs")->capture_default_str();
  bch->add_option("--warmup", bench.warmup, "Discarded warm-up epochs")->capture_default_str();
  bch->add_option("--batch-size", bench.batch_size, "Batch size")->capture_default_str();
  bch->add_option("--batches", bench.batches, "Batches per epoch")->capture_default_str();
  bch->add_option("--kernels", bench.kernels, "Kernels")->capture_default_str();
  bch->add_option("--kernel-len", bench.kernel_len, "Temporal kernel length")->capture_default_str();
  bch->add_option("--pool", bench.pool, "Pooling size")->capture_default_str();
  bch->add_option("--classes", bench.classes, "Classes")->capture_default_str();
  bch->add_option("--seed", bench.seed, "Seed")->capture_default_str();
  bch->add_option("--out", bench.out, "Output directory")->required();

  // fuse
  auto* fus = app.add_subcommand("fuse", "Convert a 1D checkpoint into the equivalent 2D checkpoint");
  FuseArgs fuse;
  fus->add_option("--checkpoint", fuse.checkpoint, "Source checkpoint directory")->required();
  fus->add_option("--out", fuse.out, "Output checkpoint directory")->required();
  fus->add_option("--inputs", fuse.inputs, "Random inputs for the deviation check")->capture_default_str();
  fus->add_option("--seed", fuse.seed, "Seed for the random inputs")->capture_default_str();

  // analyze
  auto* ana = app.add_subcommand("analyze", "Band-power reconstruction, kernel correlations and RDM");
  AnalyzeArgs analyze;
  ana->add_option("--checkpoints", analyze.checkpoints, "Checkpoint or run directories")->required();
  ana->add_option("--data", analyze.data, "TrialSet directory")->required();
  ana->add_option("--out", analyze.out, "Output directory")->required();
  ana->add_option("--csv-sfreq", analyze.csv_sfreq, "Sampling rate for CSV imports")->capture_default_str();
  ana->add_option("--permutations", analyze.permutations, "Permutations for the RDM contrast test")
      ->capture_default_str();
  ana->add_option("--seed", analyze.seed, "Seed for CV folds and permutations")->capture_default_str();
  ana->add_option("--lambda", analyze.lambda, "Ridge strength")->capture_default_str();
  ana->add_option("--folds", analyze.folds, "Ridge cross-validation folds")->capture_default_str();
  ana->add_option("--metric", analyze.metric, "correlation or euclidean")->capture_default_str();

  // report
  auto* rep = app.add_subcommand("report", "Render SVG figures from an analysis directory");
  ReportArgs report;
  rep->add_option("--in", report.in, "Analysis directory")->required();
  rep->add_option("--performance", report.performance, "performance.csv from a training run");
  rep->add_option("--out", report.out, "Output directory")->required();

  // repro
  auto* rpr = app.add_subcommand("repro", "Run gen-data, train, bench, analyze and report in one go");
  ReproArgs repro;
  rpr->add_option("--config", repro.config, "JSON run config (defaults to the desk-scale study)");
  rpr->add_option("--out", repro.out, "Run directory")->required();
  rpr->add_option("--jobs", repro.jobs, "Runs trained in parallel");
  rpr->add_flag("--quick", repro.quick, "Tiny smoke-test sizes");
  rpr->add_flag("--skip-bench", repro.skip_bench, "Skip the timing benchmark");

  try {
    try {
      app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e, out, err);
      return code == 0 ? 0 : 1;
    }

    if (gen->parsed()) {
      GenDataArgs a;
      if (gen_config) a.run = read_run_config(*gen_config);
      SyntheticConfig s = a.run.synthetic.value_or(SyntheticConfig{});
      if (!a.run.synthetic && a.run.seed) s.seed = *a.run.seed;
      if (o_channels->count()) s.n_channels = syn.n_channels;
      if (o_trials->count()) s.n_trials = syn.n_trials;
      if (o_classes->count()) s.n_classes = syn.n_classes;
      if (o_length->count()) s.n_times = syn.n_times;
      if (o_sfreq->count()) s.sfreq = syn.sfreq;
      if (o_effect->count()) s.effect_strength = syn.effect_strength;
      if (o_gseed->count()) s.seed = syn.seed;
      a.run.synthetic = s;
      if (gen_out) a.run.out = gen_out;
      cmd_gen_data(a, out);
    } else if (trn->parsed()) {
      RunConfig r = tr_config ? read_run_config(*tr_config) : RunConfig{};
      if (tr_data) {
        r.data = tr_data;
        r.synthetic.reset();
      }
      if (o_csv->count()) r.csv_sfreq = tr_csv_sfreq;
      if (tr_out) r.out = tr_out;
      if (o_tseed->count()) apply_seed(r, tr_seed);
      if (o_models->count()) r.experiment.model_types = parse_model_selection(tr_models);
      if (o_folds->count()) r.experiment.n_folds = tr_folds;
      if (o_jobs->count()) r.experiment.jobs = tr_jobs;
      if (o_epochs->count()) r.experiment.train.max_epochs = tr_epochs;
      if (o_patience->count()) r.experiment.train.patience_epochs = tr_patience;
      if (o_lr->count()) r.experiment.train.lr = tr_lr;
      if (o_batch->count()) r.experiment.train.batch_size = tr_batch;
      if (!r.data && !r.synthetic) throw ConfigError("train: give --data or a config with a data source");
      r.validate();
      cmd_train(r, out);
    } else if (bch->parsed()) {
      cmd_bench(bench, out);
    } else if (fus->parsed()) {
      cmd_fuse(fuse, out);
    } else if (ana->parsed()) {
      cmd_analyze(analyze, out);
    } else if (rep->parsed()) {
      cmd_report(report, out);
    } else if (rpr->parsed()) {
      cmd_repro(repro, out);
    }
    return 0;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"stconv"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace stconv::cli
