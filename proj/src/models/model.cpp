#include "stconv/model.hpp"

#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "stconv/errors.hpp"

namespace stconv {

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (n_channels == 0 || n_times == 0) fail("n_channels and n_times must be >= 1");
  if (n_classes < 2) fail("n_classes must be >= 2");
  if (n_kernels == 0 || kernel_len == 0) fail("n_kernels and kernel_len must be >= 1");
  if (pool_size == 0 || stride() == 0) fail("pool_size and pool_stride must be >= 1");
  if (kernel_len > n_times) {
    fail("kernel_len " + std::to_string(kernel_len) + " exceeds n_times " + std::to_string(n_times));
  }
  if (pool_size > conv_len()) {
    fail("pool_size " + std::to_string(pool_size) + " exceeds the convolved length " +
         std::to_string(conv_len()));
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) fail("dropout_p must lie in [0,1)");
  if (head == HeadKind::kTransformer) {
    if (attn_depth == 0) fail("attn_depth must be >= 1");
    if (embed() != n_kernels) fail("embed_dim must equal n_kernels (tokens are the pooled kernel maps)");
    if (attn_heads == 0 || embed() % attn_heads != 0) {
      fail(std::to_string(attn_heads) + " attention heads do not divide embed_dim " + std::to_string(embed()));
    }
  }
}

std::string model_type_name(const ModelConfig& config) {
  std::string name = config.head == HeadKind::kDense ? "cnn" : "conf";
  name += config.conv_mode == ConvMode::kSeparate1d ? "1d" : "2d";
  return name;
}

ModelConfig with_model_type(ModelConfig base, std::string_view type) {
  if (type == "cnn1d" || type == "cnn2d" || type == "conf1d" || type == "conf2d") {
    base.head = type.starts_with("cnn") ? HeadKind::kDense : HeadKind::kTransformer;
    base.conv_mode = type.ends_with("1d") ? ConvMode::kSeparate1d : ConvMode::kFused2d;
    return base;
  }
  throw ConfigError("unknown model type '" + std::string(type) + "' (expected cnn1d, cnn2d, conf1d, conf2d)");
}

namespace {

template <typename T>
void check_finite(const Tape<T>& tape, Var v, const char* layer) {
  for (T x : tape.value(v).data()) {
    if (!std::isfinite(x)) throw NumericError(std::string("non-finite activation in layer '") + layer + "'");
  }
}

template <typename T>
NdArray<T> as_batch(const NdArray<T>& x, const ModelConfig& cfg) {
  if (x.rank() == 3) {
    if (x.dim(1) != cfg.n_channels || x.dim(2) != cfg.n_times) {
      throw DimensionError("model input " + shape_str(x.shape()) + " does not match [N," +
                           std::to_string(cfg.n_channels) + "," + std::to_string(cfg.n_times) + "]");
    }
    return x.reshaped({x.dim(0), 1, cfg.n_channels, cfg.n_times});
  }
  if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg.n_channels || x.dim(3) != cfg.n_times) {
    throw DimensionError("model input " + shape_str(x.shape()) + " does not match [N,1," +
                         std::to_string(cfg.n_channels) + "," + std::to_string(cfg.n_times) + "]");
  }
  return x;
}

template <typename T>
NdArray<T> positional_table(std::size_t tokens, std::size_t width, std::size_t batch) {
  NdArray<T> pe({batch, tokens, width});
  for (std::size_t p = 0; p < tokens; ++p) {
    for (std::size_t i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double v = i % 2 == 0 ? std::sin(static_cast<double>(p) * rate) : std::cos(static_cast<double>(p) * rate);
      for (std::size_t b = 0; b < batch; ++b) pe[(b * tokens + p) * width + i] = static_cast<T>(v);
    }
  }
  return pe;
}

constexpr std::size_t kEvalChunk = 128;

}  // namespace

template <typename T>
void Model<T>::add_param(std::string name, Shape shape) {
  params_.push_back({std::move(name), NdArray<T>(std::move(shape))});
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t K = config_.n_kernels, C = config_.n_channels, m = config_.kernel_len;
  const std::size_t P = config_.pooled_len(), E = config_.embed(), n_out = config_.n_classes;

  // (name, shape, fan_in); fan_in == 0 marks a normalization scale (init 1)
  // and fan_in == SIZE_MAX a normalization shift (init 0).
  struct Spec {
    std::string name;
    Shape shape;
    std::size_t fan_in;
  };
  constexpr std::size_t kOnes = 0, kZeros = static_cast<std::size_t>(-1);
  std::vector<Spec> specs;
  if (config_.conv_mode == ConvMode::kSeparate1d) {
    specs.push_back({"temporal.weight", {K, 1, 1, m}, m});
    specs.push_back({"temporal.bias", {K}, m});
    specs.push_back({"spatial.weight", {K, K, C, 1}, K * C});
    specs.push_back({"spatial.bias", {K}, K * C});
  } else {
    specs.push_back({"spatiotemporal.weight", {K, 1, C, m}, C * m});
    specs.push_back({"spatiotemporal.bias", {K}, C * m});
  }
  specs.push_back({"bn.weight", {K}, kOnes});
  specs.push_back({"bn.bias", {K}, kZeros});
  if (config_.head == HeadKind::kDense) {
    specs.push_back({"fc.weight", {n_out, K * P}, K * P});
    specs.push_back({"fc.bias", {n_out}, K * P});
  } else {
    for (std::size_t d = 0; d < config_.attn_depth; ++d) {
      const std::string pre = "block" + std::to_string(d) + ".";
      for (const char* proj : {"attn.q", "attn.k", "attn.v", "attn.out"}) {
        specs.push_back({pre + proj + ".weight", {E, E}, E});
        specs.push_back({pre + proj + ".bias", {E}, E});
      }
      specs.push_back({pre + "ln1.weight", {E}, kOnes});
      specs.push_back({pre + "ln1.bias", {E}, kZeros});
      specs.push_back({pre + "ffn1.weight", {4 * E, E}, E});
      specs.push_back({pre + "ffn1.bias", {4 * E}, E});
      specs.push_back({pre + "ffn2.weight", {E, 4 * E}, 4 * E});
      specs.push_back({pre + "ffn2.bias", {E}, 4 * E});
      specs.push_back({pre + "ln2.weight", {E}, kOnes});
      specs.push_back({pre + "ln2.bias", {E}, kZeros});
    }
    specs.push_back({"head.fc1.weight", {8 * E, P * E}, P * E});
    specs.push_back({"head.fc1.bias", {8 * E}, P * E});
    specs.push_back({"head.fc2.weight", {n_out, 8 * E}, 8 * E});
    specs.push_back({"head.fc2.bias", {n_out}, 8 * E});
  }

  std::mt19937_64 rng(seed);
  for (auto& s : specs) {
    add_param(s.name, s.shape);
    auto& p = params_.back().value;
    if (s.fan_in == kOnes) {
      p.fill(T(1));
    } else if (s.fan_in == kZeros) {
      p.fill(T(0));
    } else {
      const double bound = std::sqrt(1.0 / static_cast<double>(s.fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (auto& v : p.data()) v = static_cast<T>(u(rng));
    }
  }
  buffers_.push_back({"bn.running_mean", NdArray<T>({K}, T(0))});
  buffers_.push_back({"bn.running_var", NdArray<T>({K}, T(1))});
}

template <typename T>
std::size_t Model<T>::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name == name) return i;
  }
  throw ContractError("model has no parameter '" + std::string(name) + "'");
}

template <typename T>
NdArray<T>& Model<T>::param(std::string_view name) {
  return params_[index_of(name)].value;
}

template <typename T>
const NdArray<T>& Model<T>::param(std::string_view name) const {
  return params_[index_of(name)].value;
}

template <typename T>
NdArray<T>& Model<T>::buffer(std::string_view name) {
  for (auto& b : buffers_) {
    if (b.name == name) return b.value;
  }
  throw ContractError("model has no buffer '" + std::string(name) + "'");
}

template <typename T>
const NdArray<T>& Model<T>::buffer(std::string_view name) const {
  for (const auto& b : buffers_) {
    if (b.name == name) return b.value;
  }
  throw ContractError("model has no buffer '" + std::string(name) + "'");
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : params_) p.value.zero_grad();
}

template <typename T>
std::vector<Var> Model<T>::bind_parameters(Tape<T>& tape) {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (auto& p : params_) vars.push_back(tape.parameter(p.value));
  return vars;
}

template <typename T>
std::vector<Var> Model<T>::bind_constants(Tape<T>& tape) const {
  std::vector<Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(tape.constant(p.value));
  return vars;
}

template <typename T>
typename Model<T>::Outputs Model<T>::run(Tape<T>& tape, const std::vector<Var>& vars, Var x,
                                         Mode mode, BatchNormBuffers<T> bn, Rng* rng,
                                         bool stop_after_pool) const {
  auto v = [&](std::string_view name) { return vars[index_of(name)]; };
  const auto& cfg = config_;
  const std::size_t B = tape.shape(x)[0];

  Var h;
  if (cfg.conv_mode == ConvMode::kSeparate1d) {
    h = ops::conv_temporal(tape, x, v("temporal.weight"), v("temporal.bias"));
    h = ops::conv_spatial(tape, h, v("spatial.weight"), v("spatial.bias"));
  } else {
    h = ops::conv_spatiotemporal(tape, x, v("spatiotemporal.weight"), v("spatiotemporal.bias"));
  }
  check_finite(tape, h, "conv");
  h = ops::elu(tape, h);
  Var pooled = ops::avg_pool_time(tape, h, cfg.pool_size, cfg.stride());
  check_finite(tape, pooled, "pool");
  if (stop_after_pool) return {pooled, pooled};

  Var z = ops::batch_norm(tape, pooled, v("bn.weight"), v("bn.bias"), bn, mode);
  check_finite(tape, z, "batch_norm");
  Rng unused(0);
  z = ops::dropout(tape, z, cfg.dropout_p, mode, rng ? *rng : unused);

  const std::size_t K = cfg.n_kernels, P = cfg.pooled_len();
  Var logits;
  if (cfg.head == HeadKind::kDense) {
    Var flat = ops::reshape(tape, z, {B, K * P});
    logits = ops::linear(tape, flat, v("fc.weight"), v("fc.bias"));
  } else {
    const std::size_t E = cfg.embed();
    Var tokens = ops::permute(tape, ops::reshape(tape, z, {B, K, P}), {0, 2, 1});
    if (cfg.positional_encoding) tokens = ops::add_constant(tape, tokens, positional_table<T>(P, E, B));
    for (std::size_t d = 0; d < cfg.attn_depth; ++d) {
      const std::string pre = "block" + std::to_string(d) + ".";
      AttentionParams ap{v(pre + "attn.q.weight"), v(pre + "attn.q.bias"),
                         v(pre + "attn.k.weight"), v(pre + "attn.k.bias"),
                         v(pre + "attn.v.weight"), v(pre + "attn.v.bias"),
                         v(pre + "attn.out.weight"), v(pre + "attn.out.bias")};
      tokens = ops::multi_head_attention(tape, tokens, cfg.attn_heads, ap, v(pre + "ln1.weight"),
                                         v(pre + "ln1.bias"));
      Var f = ops::linear(tape, tokens, v(pre + "ffn1.weight"), v(pre + "ffn1.bias"));
      f = ops::linear(tape, ops::elu(tape, f), v(pre + "ffn2.weight"), v(pre + "ffn2.bias"));
      tokens = ops::layer_norm(tape, ops::add(tape, tokens, f), v(pre + "ln2.weight"), v(pre + "ln2.bias"));
    }
    check_finite(tape, tokens, "transformer");
    Var flat = ops::reshape(tape, tokens, {B, P * E});
    Var hidden = ops::elu(tape, ops::linear(tape, flat, v("head.fc1.weight"), v("head.fc1.bias")));
    logits = ops::linear(tape, hidden, v("head.fc2.weight"), v("head.fc2.bias"));
  }
  check_finite(tape, logits, "logits");
  return {pooled, logits};
}

template <typename T>
typename Model<T>::Outputs Model<T>::forward(Tape<T>& tape, Var batch, Rng& rng) {
  auto vars = bind_parameters(tape);
  return forward(tape, vars, batch, rng);
}

template <typename T>
typename Model<T>::Outputs Model<T>::forward(Tape<T>& tape, std::span<const Var> params, Var batch, Rng& rng) {
  const Shape& s = tape.shape(batch);
  if (s.size() != 4 || s[1] != 1 || s[2] != config_.n_channels || s[3] != config_.n_times) {
    throw DimensionError("Model::forward: batch " + shape_str(s) + " does not match [B,1," +
                         std::to_string(config_.n_channels) + "," + std::to_string(config_.n_times) + "]");
  }
  if (params.size() != params_.size()) {
    throw ContractError("Model::forward: expected " + std::to_string(params_.size()) + " parameter nodes, got " +
                        std::to_string(params.size()));
  }
  BatchNormBuffers<T> bn{&buffer("bn.running_mean"), &buffer("bn.running_var")};
  return run(tape, std::vector<Var>(params.begin(), params.end()), batch, mode_, bn, &rng, false);
}

template <typename T>
NdArray<T> Model<T>::predict(const NdArray<T>& input) const {
  const NdArray<T> x = as_batch(input, config_);
  const std::size_t N = x.dim(0), per = config_.n_channels * config_.n_times;
  NdArray<T> out({N, config_.n_classes});
  NdArray<T> rm = buffer("bn.running_mean"), rv = buffer("bn.running_var");
  for (std::size_t start = 0; start < N; start += kEvalChunk) {
    const std::size_t b = std::min(kEvalChunk, N - start);
    std::vector<T> chunk(x.ptr() + start * per, x.ptr() + (start + b) * per);
    Tape<T> tape(false);
    auto vars = bind_constants(tape);
    Var in = tape.constant(NdArray<T>({b, 1, config_.n_channels, config_.n_times}, std::move(chunk)));
    auto o = run(tape, vars, in, Mode::kEval, {&rm, &rv}, nullptr, false);
    const auto& l = tape.value(o.logits);
    std::copy(l.data().begin(), l.data().end(), out.ptr() + start * config_.n_classes);
  }
  return out;
}

template <typename T>
NdArray<T> Model<T>::encode(const NdArray<T>& input) const {
  const NdArray<T> x = as_batch(input, config_);
  const std::size_t N = x.dim(0), per = config_.n_channels * config_.n_times;
  const std::size_t K = config_.n_kernels, P = config_.pooled_len();
  NdArray<T> out({N, K, P});
  NdArray<T> rm = buffer("bn.running_mean"), rv = buffer("bn.running_var");
  for (std::size_t start = 0; start < N; start += kEvalChunk) {
    const std::size_t b = std::min(kEvalChunk, N - start);
    std::vector<T> chunk(x.ptr() + start * per, x.ptr() + (start + b) * per);
    Tape<T> tape(false);
    auto vars = bind_constants(tape);
    Var in = tape.constant(NdArray<T>({b, 1, config_.n_channels, config_.n_times}, std::move(chunk)));
    auto o = run(tape, vars, in, Mode::kEval, {&rm, &rv}, nullptr, true);
    const auto& a = tape.value(o.pooled);
    std::copy(a.data().begin(), a.data().end(), out.ptr() + start * K * P);
  }
  return out;
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> out;
  out.config_ = config_;
  out.mode_ = mode_;
  for (const auto& p : params_) out.params_.push_back({p.name, p.value.template cast<U>()});
  for (const auto& b : buffers_) out.buffers_.push_back({b.name, b.value.template cast<U>()});
  return out;
}

template <typename T>
Model<T> fuse_1d_to_2d(const Model<T>& model) {
  const ModelConfig& src = model.config();
  if (src.conv_mode != ConvMode::kSeparate1d) {
    throw ContractError("fuse_1d_to_2d: model is already fused (conv_mode=fused2d)");
  }
  ModelConfig cfg = src;
  cfg.conv_mode = ConvMode::kFused2d;
  Model<T> out(cfg, 0);
  out.set_mode(model.mode());

  const std::size_t K = src.n_kernels, C = src.n_channels, m = src.kernel_len;
  const auto& wt = model.param("temporal.weight");  // [K,1,1,m]
  const auto& bt = model.param("temporal.bias");    // [K]
  const auto& ws = model.param("spatial.weight");   // [K,K,C,1]
  const auto& bs = model.param("spatial.bias");     // [K]
  auto& wf = out.param("spatiotemporal.weight");    // [K,1,C,m]
  auto& bf = out.param("spatiotemporal.bias");
  for (std::size_t j = 0; j < K; ++j) {
    double bias = static_cast<double>(bs[j]);
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t tau = 0; tau < m; ++tau) {
        double s = 0.0;
        for (std::size_t i = 0; i < K; ++i) {
          s += static_cast<double>(ws[(j * K + i) * C + c]) * static_cast<double>(wt[i * m + tau]);
        }
        wf[(j * C + c) * m + tau] = static_cast<T>(s);
      }
      for (std::size_t i = 0; i < K; ++i) {
        bias += static_cast<double>(ws[(j * K + i) * C + c]) * static_cast<double>(bt[i]);
      }
    }
    bf[j] = static_cast<T>(bias);
  }
  for (auto& p : out.parameters()) {
    if (p.name.starts_with("spatiotemporal.")) continue;
    p.value = model.param(p.name);
    p.value.clear_grad();
  }
  for (auto& b : out.buffers()) b.value = model.buffer(b.name);
  return out;
}

template <typename T>
NdArray<T> extract_encoder_activations(const Model<T>& model, const NdArray<T>& trials) {
  if (model.mode() != Mode::kEval) {
    throw ContractError("extract_encoder_activations: model must be in eval mode");
  }
  return model.encode(trials);
}

MacCounts count_macs(const ModelConfig& config) {
  const std::uint64_t K = config.n_kernels, C = config.n_channels, m = config.kernel_len;
  const std::uint64_t Tp = config.n_times >= config.kernel_len ? config.n_times - config.kernel_len + 1 : 0;
  MacCounts out;
  out.encoder_2d = K * C * Tp * m;
  out.encoder_1d = out.encoder_2d + K * K * C * Tp;
  // 1D/2D = (m + K) / m regardless of C and T'.
  const std::uint64_t g = std::gcd(m + K, m);
  out.ratio_num = (m + K) / g;
  out.ratio_den = m / g;
  return out;
}

std::size_t encoder_parameter_count(const ModelConfig& config) {
  const std::size_t K = config.n_kernels, C = config.n_channels, m = config.kernel_len;
  if (config.conv_mode == ConvMode::kSeparate1d) return K * m + K + K * K * C + K;
  return K * C * m + K;
}

template class Model<float>;
template class Model<double>;
template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;
template Model<float> Model<float>::cast<float>() const;
template Model<double> Model<double>::cast<double>() const;
template Model<float> fuse_1d_to_2d(const Model<float>&);
template Model<double> fuse_1d_to_2d(const Model<double>&);
template NdArray<float> extract_encoder_activations(const Model<float>&, const NdArray<float>&);
template NdArray<double> extract_encoder_activations(const Model<double>&, const NdArray<double>&);

}  // namespace stconv
