#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stconv/ndarray.hpp"
#include "stconv/ops.hpp"
#include "stconv/tape.hpp"

namespace stconv {

enum class ConvMode { kSeparate1d, kFused2d };
enum class HeadKind { kDense, kTransformer };

struct ModelConfig {
  std::size_t n_channels = 22;
  std::size_t n_times = 1000;
  std::size_t n_classes = 4;
  std::size_t n_kernels = 40;
  std::size_t kernel_len = 25;
  std::size_t pool_size = 100;
  std::optional<std::size_t> pool_stride;  // defaults to pool_size
  double dropout_p = 0.5;
  ConvMode conv_mode = ConvMode::kSeparate1d;
  HeadKind head = HeadKind::kDense;
  std::size_t attn_heads = 2;
  std::size_t attn_depth = 1;
  std::optional<std::size_t> embed_dim;  // defaults to n_kernels
  bool positional_encoding = false;

  std::size_t stride() const { return pool_stride.value_or(pool_size); }
  std::size_t embed() const { return embed_dim.value_or(n_kernels); }
  // Length of the time axis after the (fused or separate) convolution stage.
  std::size_t conv_len() const { return n_times - kernel_len + 1; }
  // Number of pooled time steps (tokens for the transformer head).
  std::size_t pooled_len() const { return (conv_len() - pool_size) / stride() + 1; }

  // Throws ConfigError on any violated invariant.
  void validate() const;

  // n_kernels >= min(n_channels, kernel_len): every rank-limited fused kernel
  // bank is reachable by a separate 1D pair.
  bool fusion_rank_condition() const { return n_kernels >= std::min(n_channels, kernel_len); }

  bool operator==(const ModelConfig&) const = default;
};

// "cnn1d", "cnn2d", "conf1d", "conf2d".
std::string model_type_name(const ModelConfig& config);

// Returns `base` with conv_mode/head set from a type name. Throws ConfigError
// for unknown names.
ModelConfig with_model_type(ModelConfig base, std::string_view type);

inline const std::vector<std::string>& all_model_types() {
  static const std::vector<std::string> types = {"cnn1d", "cnn2d", "conf1d", "conf2d"};
  return types;
}

template <typename T>
struct NamedArray {
  std::string name;
  NdArray<T> value;
};

// An instantiated architecture: parameters, batch-norm running statistics,
// and the train/eval mode switch.
//
// Encoder: conv_temporal -> conv_spatial (separate1d) or conv_spatiotemporal
// (fused2d), then ELU and average pooling. Then batch norm and dropout feed
// either a single dense layer or a transformer head.
template <typename T>
class Model {
 public:
  struct Outputs {
    Var pooled;  // [B, K, 1, P], immediately after pooling
    Var logits;  // [B, n_classes]
  };

  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  Mode mode() const { return mode_; }
  void set_mode(Mode mode) { mode_ = mode; }

  std::vector<NamedArray<T>>& parameters() { return params_; }
  const std::vector<NamedArray<T>>& parameters() const { return params_; }
  std::vector<NamedArray<T>>& buffers() { return buffers_; }
  const std::vector<NamedArray<T>>& buffers() const { return buffers_; }

  NdArray<T>& param(std::string_view name);
  const NdArray<T>& param(std::string_view name) const;
  NdArray<T>& buffer(std::string_view name);
  const NdArray<T>& buffer(std::string_view name) const;

  std::size_t parameter_count() const;
  void zero_grad();

  // Records a forward pass on `tape` with parameters bound as gradient
  // leaves. In train mode, batch norm updates its running statistics and
  // dropout draws from `rng`. Throws NumericError naming the layer when a
  // non-finite activation appears.
  Outputs forward(Tape<T>& tape, Var batch, Rng& rng);

  // As above, with the parameters supplied as nodes already on `tape`, in
  // the order of parameters(). Lets callers differentiate with respect to
  // substitute values (finite-difference checks, functional updates).
  Outputs forward(Tape<T>& tape, std::span<const Var> params, Var batch, Rng& rng);

  // Eval-mode logits for x [B,1,C,T] or [B,C,T], evaluated in chunks.
  NdArray<T> predict(const NdArray<T>& x) const;

  // Eval-mode post-pooling activations [B, K, P].
  NdArray<T> encode(const NdArray<T>& x) const;

  template <typename U>
  Model<U> cast() const;

 private:
  template <typename U>
  friend class Model;
  Model() = default;

  std::vector<Var> bind_parameters(Tape<T>& tape);
  std::vector<Var> bind_constants(Tape<T>& tape) const;
  Outputs run(Tape<T>& tape, const std::vector<Var>& vars, Var batch, Mode mode,
              BatchNormBuffers<T> bn, Rng* rng, bool stop_after_pool) const;
  std::size_t index_of(std::string_view name) const;
  void add_param(std::string name, Shape shape);

  ModelConfig config_;
  Mode mode_ = Mode::kTrain;
  std::vector<NamedArray<T>> params_;
  std::vector<NamedArray<T>> buffers_;
};

template <typename T>
Model<T> build_model(const ModelConfig& config, std::uint64_t seed) {
  return Model<T>(config, seed);
}

// Converts a separate1d model into the fused2d model computing the same
// function: K[j,0,c,tau] = sum_i Ws[j,i,c,0] * Wt[i,0,0,tau] and
// b'[j] = bs[j] + sum_{i,c} Ws[j,i,c,0] * bt[i]. Everything downstream of the
// encoder is copied. Throws ContractError for a fused2d input.
template <typename T>
Model<T> fuse_1d_to_2d(const Model<T>& model);

// Eval-mode activations after pooling, before batch norm: [N, K, P].
// Throws ContractError if the model is in train mode and DimensionError when
// the trial shape does not match the configuration.
template <typename T>
NdArray<T> extract_encoder_activations(const Model<T>& model, const NdArray<T>& trials);

struct MacCounts {
  std::uint64_t encoder_1d = 0;
  std::uint64_t encoder_2d = 0;
  std::uint64_t ratio_num = 0;  // encoder_1d / encoder_2d in lowest terms
  std::uint64_t ratio_den = 1;
  double ratio() const { return static_cast<double>(ratio_num) / static_cast<double>(ratio_den); }
};

// Per-sample multiply-accumulates of the two encoder variants:
// 1D = K*C*T'*m + K*K*C*T', 2D = K*C*T'*m.
MacCounts count_macs(const ModelConfig& config);

// Learnable parameters in the convolution stage only.
std::size_t encoder_parameter_count(const ModelConfig& config);

}  // namespace stconv
