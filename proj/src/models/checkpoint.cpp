#include "stconv/checkpoint.hpp"

#include <fstream>
#include <set>

#include "stconv/detail/binio.hpp"
#include "stconv/detail/json_util.hpp"
#include "stconv/errors.hpp"

namespace stconv {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::size_t get_count(const json& j, const char* key) {
  const json& v = j.at(key);
  if (!detail::is_count(v)) throw ConfigError(std::string("model config: '") + key + "' must be a non-negative integer");
  return v.get<std::size_t>();
}

std::optional<std::size_t> get_optional_count(const json& j, const char* key) {
  if (j.at(key).is_null()) return std::nullopt;
  return get_count(j, key);
}

json shape_json(const Shape& s) { return json(std::vector<std::size_t>(s.begin(), s.end())); }

}  // namespace

json config_to_json(const ModelConfig& c) {
  return {
      {"n_channels", c.n_channels},
      {"n_times", c.n_times},
      {"n_classes", c.n_classes},
      {"n_kernels", c.n_kernels},
      {"kernel_len", c.kernel_len},
      {"pool_size", c.pool_size},
      {"pool_stride", c.pool_stride ? json(*c.pool_stride) : json(nullptr)},
      {"dropout_p", c.dropout_p},
      {"conv_mode", c.conv_mode == ConvMode::kSeparate1d ? "separate1d" : "fused2d"},
      {"head", c.head == HeadKind::kDense ? "dense" : "transformer"},
      {"attn_heads", c.attn_heads},
      {"attn_depth", c.attn_depth},
      {"embed_dim", c.embed_dim ? json(*c.embed_dim) : json(nullptr)},
      {"positional_encoding", c.positional_encoding},
  };
}

ModelConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  static const std::set<std::string> known = {
      "n_channels", "n_times",   "n_classes",  "n_kernels",  "kernel_len", "pool_size",  "pool_stride",
      "dropout_p",  "conv_mode", "head",       "attn_heads", "attn_depth", "embed_dim", "positional_encoding"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("model config: unknown key '" + key + "'");
  }
  ModelConfig c;
  for (auto [key, field] : {std::pair{"n_channels", &c.n_channels}, {"n_times", &c.n_times},
                            {"n_classes", &c.n_classes}, {"n_kernels", &c.n_kernels},
                            {"kernel_len", &c.kernel_len}, {"pool_size", &c.pool_size},
                            {"attn_heads", &c.attn_heads}, {"attn_depth", &c.attn_depth}}) {
    if (j.contains(key)) *field = get_count(j, key);
  }
  if (j.contains("pool_stride")) c.pool_stride = get_optional_count(j, "pool_stride");
  if (j.contains("embed_dim")) c.embed_dim = get_optional_count(j, "embed_dim");
  if (j.contains("dropout_p")) {
    if (!j["dropout_p"].is_number()) throw ConfigError("model config: 'dropout_p' must be a number");
    c.dropout_p = j["dropout_p"].get<double>();
  }
  if (j.contains("positional_encoding")) {
    if (!j["positional_encoding"].is_boolean()) throw ConfigError("model config: 'positional_encoding' must be a boolean");
    c.positional_encoding = j["positional_encoding"].get<bool>();
  }
  if (j.contains("conv_mode")) {
    const json& v = j["conv_mode"];
    if (v == "separate1d") c.conv_mode = ConvMode::kSeparate1d;
    else if (v == "fused2d") c.conv_mode = ConvMode::kFused2d;
    else throw ConfigError("model config: conv_mode must be 'separate1d' or 'fused2d', got " + v.dump());
  }
  if (j.contains("head")) {
    const json& v = j["head"];
    if (v == "dense") c.head = HeadKind::kDense;
    else if (v == "transformer") c.head = HeadKind::kTransformer;
    else throw ConfigError("model config: head must be 'dense' or 'transformer', got " + v.dump());
  }
  c.validate();
  return c;
}

template <typename T>
void save_checkpoint(const Model<T>& model, const fs::path& dir, const CheckpointInfo& info) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw FormatError("cannot create directory " + dir.string() + ": " + ec.message());

  json params = json::array(), buffers = json::array();
  std::vector<float> blob;
  auto append = [&blob](json& list, const NamedArray<T>& a) {
    list.push_back({{"name", a.name}, {"shape", shape_json(a.value.shape())}, {"offset", blob.size()}});
    for (T v : a.value.data()) blob.push_back(static_cast<float>(v));
  };
  for (const auto& p : model.parameters()) append(params, p);
  for (const auto& b : model.buffers()) append(buffers, b);

  json manifest = {
      {"format", "stconv-checkpoint"},
      {"version", kCheckpointFormatVersion},
      {"model_type", model_type_name(model.config())},
      {"config", config_to_json(model.config())},
      {"mode", model.mode() == Mode::kTrain ? "train" : "eval"},
      {"dtype", "float32"},
      {"endianness", "little"},
      {"n_values", blob.size()},
      {"parameters", params},
      {"buffers", buffers},
      {"extra", info.extra},
  };
  if (info.scaler) manifest["scaler"] = {{"mean", info.scaler->mean}, {"std", info.scaler->std}};
  detail::write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  std::ofstream os(dir / "params.bin", std::ios::binary);
  if (!os) throw FormatError("cannot write " + (dir / "params.bin").string());
  detail::write_le_floats(os, blob);
  if (!os) throw FormatError("write failed for " + (dir / "params.bin").string());
}

Model<float> load_checkpoint(const fs::path& dir, CheckpointInfo* info) {
  const fs::path manifest_path = dir / "manifest.json";
  if (!fs::exists(manifest_path)) throw FormatError("no checkpoint manifest at " + manifest_path.string());
  json m;
  try {
    m = json::parse(detail::read_text(manifest_path));
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  try {
    if (m.at("format") != "stconv-checkpoint") throw FormatError(manifest_path.string() + ": not a checkpoint manifest");
    if (m.at("version") != kCheckpointFormatVersion) {
      throw FormatError(manifest_path.string() + ": unknown checkpoint version " + m.at("version").dump());
    }
    if (m.at("dtype") != "float32" || m.at("endianness") != "little") {
      throw FormatError(manifest_path.string() + ": only little-endian float32 checkpoints are supported");
    }
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }

  Model<float> model(config_from_json(m.at("config")), 0);
  model.set_mode(m.value("mode", "eval") == "train" ? Mode::kTrain : Mode::kEval);

  const fs::path bin_path = dir / "params.bin";
  const std::size_t n_values = m.at("n_values").get<std::size_t>();
  if (!fs::exists(bin_path)) throw FormatError("missing " + bin_path.string());
  const auto actual = fs::file_size(bin_path);
  if (actual != n_values * sizeof(float)) {
    throw FormatError(bin_path.string() + ": expected " + std::to_string(n_values * sizeof(float)) +
                      " bytes, found " + std::to_string(actual));
  }
  std::vector<float> blob(n_values);
  {
    std::ifstream is(bin_path, std::ios::binary);
    detail::read_le_floats(is, blob);
    if (!is) throw FormatError("read failed for " + bin_path.string());
  }

  auto restore = [&](const json& list, std::vector<NamedArray<float>>& targets, const char* what) {
    if (list.size() != targets.size()) {
      throw FormatError(manifest_path.string() + ": expected " + std::to_string(targets.size()) + " " + what +
                        ", found " + std::to_string(list.size()));
    }
    for (auto& t : targets) {
      const json* entry = nullptr;
      for (const auto& e : list) {
        if (e.at("name") == t.name) entry = &e;
      }
      if (!entry) throw FormatError(manifest_path.string() + ": missing " + what + " '" + t.name + "'");
      const auto shape = entry->at("shape").get<std::vector<std::size_t>>();
      if (Shape(shape.begin(), shape.end()) != t.value.shape()) {
        throw FormatError(manifest_path.string() + ": " + t.name + " has shape " +
                          shape_str(Shape(shape.begin(), shape.end())) + ", config implies " +
                          shape_str(t.value.shape()));
      }
      const std::size_t offset = entry->at("offset").get<std::size_t>();
      if (offset + t.value.size() > blob.size()) {
        throw FormatError(manifest_path.string() + ": " + t.name + " extends past the end of params.bin");
      }
      std::copy_n(blob.begin() + static_cast<std::ptrdiff_t>(offset), t.value.size(), t.value.data().begin());
    }
  };
  try {
    restore(m.at("parameters"), model.parameters(), "parameters");
    restore(m.at("buffers"), model.buffers(), "buffers");
    if (info) {
      info->scaler.reset();
      if (m.contains("scaler")) {
        info->scaler = Scaler{m["scaler"].at("mean").get<std::vector<double>>(),
                              m["scaler"].at("std").get<std::vector<double>>()};
      }
      info->extra = m.value("extra", json::object());
    }
  } catch (const json::exception& e) {
    throw FormatError(manifest_path.string() + ": " + e.what());
  }
  return model;
}

template void save_checkpoint(const Model<float>&, const fs::path&, const CheckpointInfo&);
template void save_checkpoint(const Model<double>&, const fs::path&, const CheckpointInfo&);

}  // namespace stconv
