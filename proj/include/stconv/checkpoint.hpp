#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "stconv/model.hpp"
#include "stconv/scaler.hpp"

namespace stconv {

nlohmann::json config_to_json(const ModelConfig& config);

// Strict inverse of config_to_json. Missing keys keep their defaults; unknown
// keys and ill-typed values throw ConfigError. The result is validated.
ModelConfig config_from_json(const nlohmann::json& j);

struct CheckpointInfo {
  std::optional<Scaler> scaler;  // preprocessing fitted alongside the model
  nlohmann::json extra = nlohmann::json::object();
};

// Writes `dir/manifest.json` (config, mode, parameter and buffer names with
// shapes and element offsets) and `dir/params.bin` (little-endian float32).
// A 64-bit model is rounded to 32 bits on the way out.
template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& dir,
                     const CheckpointInfo& info = {});

// Throws FormatError on a malformed or truncated checkpoint and ConfigError
// on an invalid stored configuration.
Model<float> load_checkpoint(const std::filesystem::path& dir, CheckpointInfo* info = nullptr);

inline constexpr int kCheckpointFormatVersion = 1;

}  // namespace stconv
