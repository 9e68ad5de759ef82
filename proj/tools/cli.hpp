#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stconv/experiment.hpp"
#include "stconv/synthetic.hpp"

namespace stconv::cli {

inline constexpr const char* kToolVersion = "0.1.0";

// Everything a run needs, as read from a JSON config file and then
// overridden by command-line flags. Top-level keys: data, csv_sfreq,
// synthetic, experiment, out, seed. Unknown keys are rejected.
struct RunConfig {
  std::optional<std::filesystem::path> data;
  double csv_sfreq = 250.0;
  std::optional<SyntheticConfig> synthetic;
  ExperimentConfig experiment;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;

  // Throws ConfigError.
  void validate() const;
};

nlohmann::json synthetic_config_to_json(const SyntheticConfig& config);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j, SyntheticConfig base = {});

nlohmann::json run_config_to_json(const RunConfig& config);
// `seed`, when present, seeds the synthetic generator, the splits, the model
// initialization and the batch order; explicit keys in `experiment` or
// `synthetic` win over it.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig read_run_config(const std::filesystem::path& path);

// The smaller-than-published setup the repro command uses by default.
RunConfig desk_scale_config();

// 64-bit FNV-1a of a file's bytes, for run manifests.
std::uint64_t file_checksum(const std::filesystem::path& path);

// Parses argv and runs one command. Returns the process exit code:
// 0 success, 1 usage or configuration error, 2 data or format error,
// 3 numeric failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stconv::cli
