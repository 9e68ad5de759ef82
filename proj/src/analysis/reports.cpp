#include "stconv/reports.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stconv/detail/binio.hpp"
#include "stconv/detail/csv.hpp"
#include "stconv/errors.hpp"
#include "stconv/experiment.hpp"
#include "stconv/svg.hpp"

namespace stconv {
namespace fs = std::filesystem;
using detail::format_double;
using nlohmann::json;

AnalysisResults analyze_models(std::span<const AnalysisInput> inputs, const TrialSet& trials,
                               const AnalysisOptions& options) {
  if (inputs.empty()) throw DataError("analysis: no models supplied");
  std::set<std::string> ids;
  for (const auto& in : inputs) {
    if (!in.model) throw ContractError("analysis: model '" + in.model_id + "' is null");
    if (!ids.insert(in.model_id).second) throw DataError("analysis: duplicate model id '" + in.model_id + "'");
  }
  const BandPowerTable powers = band_powers(trials);

  AnalysisResults out;
  out.channel_names = trials.channel_names;
  out.bands = powers.bands;
  out.sensitivity_lambdas = options.sensitivity_lambdas;
  out.metric = options.metric;
  std::vector<ActivationSet> sets;
  for (const auto& in : inputs) {
    ActivationSet acts = collect_activations(*in.model, in.scaler, trials, in.model_id);
    ModelAnalysis m;
    m.model_id = in.model_id;
    m.model_type = in.model_type;
    m.r2 = reconstruct_band_power(acts, powers, options.ridge);
    m.correlations = kernel_feature_correlations(acts, powers);
    for (double lambda : options.sensitivity_lambdas) {
      RidgeConfig rc = options.ridge;
      rc.lambda = lambda;
      const NdArray<double> r2 = reconstruct_band_power(acts, powers, rc);
      double s = 0.0;
      for (double v : r2.data()) s += v;
      m.sensitivity_mean_r2.push_back(s / static_cast<double>(r2.size()));
    }
    out.models.push_back(std::move(m));
    sets.push_back(std::move(acts));
  }
  out.rdm = compute_rdm(sets, options.metric);

  std::vector<std::string> labels;
  std::map<std::string, std::size_t> per_type;
  for (const auto& in : inputs) {
    labels.push_back(in.model_type);
    ++per_type[in.model_type];
  }
  const bool contrastable = per_type.size() >= 2 && std::all_of(per_type.begin(), per_type.end(),
                                                                 [](const auto& kv) { return kv.second >= 2; });
  if (contrastable) out.rsa = rdm_permutation_test(out.rdm, labels, options.n_permutations, options.seed);
  return out;
}

void write_r2_csv(const NdArray<double>& r2, std::span<const std::string> channel_names, std::span<const Band> bands,
                  const fs::path& path) {
  if (r2.rank() != 2 || r2.dim(0) != channel_names.size() || r2.dim(1) != bands.size()) {
    throw DimensionError("r2 table " + shape_str(r2.shape()) + " does not match " +
                         std::to_string(channel_names.size()) + " channels x " + std::to_string(bands.size()) +
                         " bands");
  }
  std::string s = "channel,band_lo,band_hi,r2\n";
  for (std::size_t c = 0; c < channel_names.size(); ++c) {
    for (std::size_t b = 0; b < bands.size(); ++b) {
      s += channel_names[c] + "," + format_double(bands[b].lo) + "," + format_double(bands[b].hi) + "," +
           format_double(r2[c * bands.size() + b]) + "\n";
    }
  }
  detail::write_text(path, s);
}

namespace {

std::vector<std::vector<std::string>> read_rows(const fs::path& path, const std::vector<std::string>& header) {
  std::istringstream is(detail::read_text(path));
  std::string line;
  if (!std::getline(is, line) || detail::split_csv_line(line) != header) {
    throw FormatError(path.string() + ": unexpected header");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto cells = detail::split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError(path.string() + ": expected " + std::to_string(header.size()) + " columns in '" + line + "'");
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::string band_label(const Band& b) { return format_double(b.lo) + "-" + format_double(b.hi) + " Hz"; }

// Model ids may end up in file names; keep them to a safe alphabet.
std::string file_stem(const std::string& id) {
  std::string s = id;
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) c = '_';
  }
  return s;
}

}  // namespace

NdArray<double> read_r2_csv(const fs::path& path, std::vector<std::string>* channel_names, std::vector<Band>* bands) {
  const auto rows = read_rows(path, {"channel", "band_lo", "band_hi", "r2"});
  std::vector<std::string> channels;
  std::vector<Band> band_list;
  std::vector<double> values;
  for (const auto& r : rows) {
    if (channels.empty() || channels.back() != r[0]) channels.push_back(r[0]);
    const Band b{detail::parse_double(r[1], path), detail::parse_double(r[2], path)};
    if (channels.size() == 1) band_list.push_back(b);
    values.push_back(detail::parse_double(r[3], path));
  }
  if (channels.empty() || values.size() != channels.size() * band_list.size()) {
    throw FormatError(path.string() + ": rows do not form a channel x band grid");
  }
  if (channel_names) *channel_names = channels;
  if (bands) *bands = band_list;
  return NdArray<double>({channels.size(), band_list.size()}, std::move(values));
}

void write_rdm_csv(const Rdm& rdm, const fs::path& path) {
  std::string s = "model";
  for (const auto& id : rdm.model_ids) s += "," + id;
  s += "\n";
  for (std::size_t i = 0; i < rdm.size(); ++i) {
    s += rdm.model_ids[i];
    for (std::size_t j = 0; j < rdm.size(); ++j) s += "," + format_double(rdm.at(i, j));
    s += "\n";
  }
  detail::write_text(path, s);
}

Rdm read_rdm_csv(const fs::path& path) {
  std::istringstream is(detail::read_text(path));
  std::string line;
  if (!std::getline(is, line)) throw FormatError(path.string() + ": empty file");
  auto head = detail::split_csv_line(line);
  if (head.size() < 2 || head[0] != "model") throw FormatError(path.string() + ": unexpected header");
  Rdm rdm;
  rdm.model_ids.assign(head.begin() + 1, head.end());
  const std::size_t m = rdm.model_ids.size();
  std::vector<double> values;
  std::size_t row = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (row >= m || cells.size() != m + 1 || cells[0] != rdm.model_ids[row]) {
      throw FormatError(path.string() + ": malformed row " + std::to_string(row + 1));
    }
    for (std::size_t j = 1; j <= m; ++j) values.push_back(detail::parse_double(cells[j], path));
    ++row;
  }
  if (row != m) throw FormatError(path.string() + ": expected " + std::to_string(m) + " rows, found " + std::to_string(row));
  rdm.dissimilarity = NdArray<double>({m, m}, std::move(values));
  return rdm;
}

std::vector<double> read_correlation_values(const fs::path& path) {
  std::vector<double> out;
  for (const auto& r : read_rows(path, {"kernel", "channel", "band_lo", "band_hi", "r"})) {
    out.push_back(detail::parse_double(r[4], path));
  }
  return out;
}

void write_analysis(const AnalysisResults& res, const fs::path& dir) {
  std::error_code ec;
  for (const auto& sub : {dir / "r2", dir / "correlations"}) {
    fs::create_directories(sub, ec);
    if (ec) throw FormatError("cannot create " + sub.string() + ": " + ec.message());
  }
  std::string models = "model,type\n", summary = "model,type,mean,std,n_zero_variance_kernels\n",
              sensitivity = "model,lambda,mean_r2\n";
  for (const auto& m : res.models) {
    const std::string stem = file_stem(m.model_id);
    models += m.model_id + "," + m.model_type + "\n";
    write_r2_csv(m.r2, res.channel_names, res.bands, dir / "r2" / (stem + ".csv"));

    const auto& r = m.correlations.r;
    const std::size_t K = r.dim(0), C = r.dim(1), B = r.dim(2);
    std::string corr = "kernel,channel,band_lo,band_hi,r\n";
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t b = 0; b < B; ++b) {
          corr += std::to_string(k) + "," + res.channel_names[c] + "," + format_double(res.bands[b].lo) + "," +
                  format_double(res.bands[b].hi) + "," + format_double(r[(k * C + c) * B + b]) + "\n";
        }
      }
    }
    detail::write_text(dir / "correlations" / (stem + ".csv"), corr);
    summary += m.model_id + "," + m.model_type + "," + format_double(m.correlations.mean) + "," +
               format_double(m.correlations.std) + "," +
               std::to_string(m.correlations.zero_variance_kernels.size()) + "\n";
    for (std::size_t i = 0; i < res.sensitivity_lambdas.size() && i < m.sensitivity_mean_r2.size(); ++i) {
      sensitivity += m.model_id + "," + format_double(res.sensitivity_lambdas[i]) + "," +
                     format_double(m.sensitivity_mean_r2[i]) + "\n";
    }
  }
  detail::write_text(dir / "models.csv", models);
  detail::write_text(dir / "correlation_summary.csv", summary);
  detail::write_text(dir / "ridge_sensitivity.csv", sensitivity);
  write_rdm_csv(res.rdm, dir / "rdm.csv");

  json rsa = {{"metric", res.metric == DistanceMetric::kCorrelation ? "correlation" : "euclidean"}};
  if (res.rsa) {
    rsa["within_mean"] = res.rsa->observed.within_mean;
    rsa["between_mean"] = res.rsa->observed.between_mean;
    rsa["gap"] = res.rsa->observed.gap;
    rsa["p_value"] = res.rsa->p_value;
    rsa["n_permutations"] = res.rsa->n_permutations;
  } else {
    rsa["contrast"] = nullptr;
  }
  detail::write_text(dir / "rsa.json", rsa.dump(2) + "\n");
}

std::vector<fs::path> render_reports(const fs::path& analysis_dir, const std::optional<fs::path>& performance_csv,
                                     const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw FormatError("cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<fs::path> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    detail::write_text(out_dir / name, content);
    written.push_back(out_dir / name);
  };

  const Rdm rdm = read_rdm_csv(analysis_dir / "rdm.csv");
  double hi = 0.0;
  for (double v : rdm.dissimilarity.data()) hi = std::max(hi, v);
  emit("rdm.svg", svg::heatmap(rdm.dissimilarity.data(), rdm.size(), rdm.size(), rdm.model_ids, rdm.model_ids,
                               "Representational dissimilarity", 0.0, hi > 0.0 ? hi : 1.0));

  const auto models = read_rows(analysis_dir / "models.csv", {"model", "type"});
  std::vector<double> all_r;
  for (const auto& row : models) {
    const std::string stem = file_stem(row[0]);
    std::vector<std::string> channels;
    std::vector<Band> bands;
    const NdArray<double> r2 = read_r2_csv(analysis_dir / "r2" / (stem + ".csv"), &channels, &bands);
    std::vector<std::string> band_names;
    for (const auto& b : bands) band_names.push_back(band_label(b));
    emit("r2_" + stem + ".svg", svg::heatmap(r2.data(), channels.size(), bands.size(), channels, band_names,
                                             "Band-power reconstruction R2: " + row[0], 0.0, 1.0));
    const auto r = read_correlation_values(analysis_dir / "correlations" / (stem + ".csv"));
    emit("correlations_" + stem + ".svg",
         svg::histogram(r, 40, -1.0, 1.0, "Kernel / band-power correlations: " + row[0], "Pearson r"));
    all_r.insert(all_r.end(), r.begin(), r.end());
  }
  if (!all_r.empty()) {
    emit("correlations_all.svg",
         svg::histogram(all_r, 40, -1.0, 1.0, "Kernel / band-power correlations: all models", "Pearson r"));
  }

  if (performance_csv) {
    std::vector<svg::ScatterSeries> series;
    for (const auto& row : read_performance_csv(*performance_csv)) {
      if (row.model == "majority") continue;
      auto it = std::find_if(series.begin(), series.end(), [&](const auto& s) { return s.name == row.model; });
      if (it == series.end()) {
        series.push_back({row.model, {}, {}});
        it = series.end() - 1;
      }
      it->x.push_back(row.mean_epoch_s);
      it->y.push_back(row.accuracy);
    }
    emit("performance.svg", svg::scatter(series, "Accuracy against training time", "seconds per epoch",
                                         "test accuracy"));
  }
  return written;
}

}  // namespace stconv
