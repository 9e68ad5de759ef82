#include "stconv/trialset.hpp"

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "stconv/detail/binio.hpp"
#include "stconv/detail/csv.hpp"
#include "stconv/errors.hpp"

namespace stconv {
namespace fs = std::filesystem;
using nlohmann::json;
using detail::read_le_floats;
using detail::read_text;
using detail::write_le_floats;

void TrialSet::validate() const {
  if (data.rank() != 3) throw DataError("TrialSet: data must be [N,C,T], got " + shape_str(data.shape()));
  if (labels.size() != n_trials()) {
    throw DataError("TrialSet: " + std::to_string(labels.size()) + " labels for " +
                    std::to_string(n_trials()) + " trials");
  }
  if (!(sfreq > 0.0)) throw DataError("TrialSet: sampling rate must be positive");
  if (channel_names.size() != n_channels()) {
    throw DataError("TrialSet: " + std::to_string(channel_names.size()) + " channel names for " +
                    std::to_string(n_channels()) + " channels");
  }
  if (std::set<std::string>(channel_names.begin(), channel_names.end()).size() != channel_names.size()) {
    throw DataError("TrialSet: channel names must be unique");
  }
  if (class_names.empty()) throw DataError("TrialSet: at least one class name is required");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= class_names.size()) {
      throw DataError("TrialSet: label " + std::to_string(y) + " outside 0.." +
                      std::to_string(class_names.size() - 1));
    }
  }
}

TrialSet TrialSet::subset(std::span<const std::size_t> indices) const {
  TrialSet out;
  out.sfreq = sfreq;
  out.channel_names = channel_names;
  out.class_names = class_names;
  out.metadata = metadata;
  if (indices.empty()) throw DataError("TrialSet::subset: empty index list");
  const std::size_t per_trial = n_channels() * n_times();
  std::vector<float> buf(indices.size() * per_trial);
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= n_trials()) throw DataError("TrialSet::subset: index " + std::to_string(src) + " out of range");
    std::memcpy(buf.data() + i * per_trial, data.ptr() + src * per_trial, per_trial * sizeof(float));
    out.labels.push_back(labels[src]);
  }
  out.data = NdArray<float>({indices.size(), n_channels(), n_times()}, std::move(buf));
  return out;
}

std::vector<std::size_t> TrialSet::class_counts() const {
  std::vector<std::size_t> counts(n_classes(), 0);
  for (int y : labels) {
    if (y >= 0 && static_cast<std::size_t>(y) < counts.size()) ++counts[y];
  }
  return counts;
}

using detail::parse_double;
using detail::split_csv_line;

void save_trialset(const TrialSet& trials, const fs::path& dir) {
  trials.validate();
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create directory " + dir.string() + ": " + ec.message());
  json manifest = {
      {"format", "stconv-trialset"},
      {"version", kTrialSetFormatVersion},
      {"n_trials", trials.n_trials()},
      {"n_channels", trials.n_channels()},
      {"n_times", trials.n_times()},
      {"sfreq", trials.sfreq},
      {"dtype", "float32"},
      {"endianness", "little"},
      {"layout", "trial,channel,time"},
      {"labels", trials.labels},
      {"channel_names", trials.channel_names},
      {"class_names", trials.class_names},
      {"metadata", trials.metadata},
  };
  {
    std::ofstream os(dir / "manifest.json");
    if (!os) throw FormatError("cannot write " + (dir / "manifest.json").string());
    os << manifest.dump(2) << '\n';
  }
  std::ofstream os(dir / "data.bin", std::ios::binary);
  if (!os) throw FormatError("cannot write " + (dir / "data.bin").string());
  write_le_floats(os, trials.data.data());
  if (!os) throw FormatError("write failed for " + (dir / "data.bin").string());
}

TrialSet load_trialset(const fs::path& dir, double csv_sfreq) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) {
    if (fs::exists(dir / "index.csv")) return import_csv_trials(dir, csv_sfreq);
    throw FormatError("no manifest.json or index.csv in " + dir.string());
  }
  json m;
  try {
    m = json::parse(read_text(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  TrialSet out;
  std::size_t n = 0, c = 0, t = 0;
  try {
    if (m.value("format", std::string()) != "stconv-trialset") {
      throw FormatError(manifest_path.string() + ": not a trial set manifest");
    }
    const int version = m.at("version").get<int>();
    if (version != kTrialSetFormatVersion) {
      throw FormatError(manifest_path.string() + ": unknown format version " + std::to_string(version));
    }
    if (m.at("dtype").get<std::string>() != "float32" ||
        m.at("endianness").get<std::string>() != "little") {
      throw FormatError(manifest_path.string() + ": only little-endian float32 data is supported");
    }
    n = m.at("n_trials").get<std::size_t>();
    c = m.at("n_channels").get<std::size_t>();
    t = m.at("n_times").get<std::size_t>();
    out.sfreq = m.at("sfreq").get<double>();
    out.labels = m.at("labels").get<std::vector<int>>();
    out.channel_names = m.at("channel_names").get<std::vector<std::string>>();
    out.class_names = m.at("class_names").get<std::vector<std::string>>();
    out.metadata = m.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  if (n == 0 || c == 0 || t == 0) throw FormatError(manifest_path.string() + ": empty dimensions");
  const fs::path data_path = dir / "data.bin";
  if (!fs::exists(data_path)) throw FormatError("missing " + data_path.string());
  const std::uintmax_t expected = static_cast<std::uintmax_t>(n) * c * t * sizeof(float);
  const std::uintmax_t actual = fs::file_size(data_path);
  if (actual != expected) {
    throw FormatError(data_path.string() + ": expected " + std::to_string(expected) +
                      " bytes for [" + std::to_string(n) + "," + std::to_string(c) + "," +
                      std::to_string(t) + "] float32, found " + std::to_string(actual));
  }
  std::vector<float> buf(n * c * t);
  std::ifstream is(data_path, std::ios::binary);
  read_le_floats(is, buf);
  if (!is) throw FormatError("read failed for " + data_path.string());
  out.data = NdArray<float>({n, c, t}, std::move(buf));
  try {
    out.validate();
  } catch (const DataError& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  return out;
}

TrialSet import_csv_trials(const fs::path& dir, double sfreq) {
  const fs::path index_path = dir / "index.csv";
  std::istringstream index(read_text(index_path));
  std::string line;
  if (!std::getline(index, line)) throw FormatError(index_path.string() + ": empty index");
  const auto header = split_csv_line(line);
  if (header.size() != 2 || header[0] != "file" || header[1] != "label") {
    throw FormatError(index_path.string() + ": header must be 'file,label'");
  }
  std::vector<std::vector<double>> trials;
  std::vector<int> labels;
  std::size_t n_channels = 0, n_times = 0;
  while (std::getline(index, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != 2) throw FormatError(index_path.string() + ": malformed row '" + line + "'");
    const fs::path trial_path = dir / cells[0];
    labels.push_back(static_cast<int>(parse_double(cells[1], index_path)));
    std::istringstream rows(read_text(trial_path));
    std::vector<double> values;
    std::size_t channels = 0, times = 0;
    std::string row;
    while (std::getline(rows, row)) {
      if (row.empty() || row == "\r") continue;
      const auto cols = split_csv_line(row);
      if (channels == 0) {
        times = cols.size();
      } else if (cols.size() != times) {
        throw FormatError(trial_path.string() + ": ragged row " + std::to_string(channels + 1));
      }
      for (const auto& v : cols) values.push_back(parse_double(v, trial_path));
      ++channels;
    }
    if (channels == 0 || times == 0) throw FormatError(trial_path.string() + ": empty trial");
    if (trials.empty()) {
      n_channels = channels;
      n_times = times;
    } else if (channels != n_channels || times != n_times) {
      throw FormatError(trial_path.string() + ": shape differs from the first trial");
    }
    trials.push_back(std::move(values));
  }
  if (trials.empty()) throw FormatError(index_path.string() + ": no trials listed");

  TrialSet out;
  std::vector<float> buf;
  buf.reserve(trials.size() * n_channels * n_times);
  for (const auto& t : trials) {
    for (double v : t) buf.push_back(static_cast<float>(v));
  }
  out.data = NdArray<float>({trials.size(), n_channels, n_times}, std::move(buf));
  out.labels = std::move(labels);
  out.sfreq = sfreq;
  for (std::size_t c = 0; c < n_channels; ++c) out.channel_names.push_back("ch" + std::to_string(c));
  int max_label = 0;
  for (int y : out.labels) max_label = std::max(max_label, y);
  for (int k = 0; k <= max_label; ++k) out.class_names.push_back("class" + std::to_string(k));
  out.validate();
  return out;
}

}  // namespace stconv
