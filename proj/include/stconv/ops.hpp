#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <vector>

#include "stconv/ndarray.hpp"
#include "stconv/tape.hpp"

namespace stconv {

enum class Mode { kTrain, kEval };

using Rng = std::mt19937_64;

// Running statistics owned by a batch-norm layer.
template <typename T>
struct BatchNormBuffers {
  NdArray<T>* running_mean = nullptr;
  NdArray<T>* running_var = nullptr;
  T momentum = T(0.1);
  T eps = T(1e-5);
};

// Learned projections of one attention block; weights are [E,E], biases [E].
struct AttentionParams {
  Var wq, bq, wk, bk, wv, bv, wo, bo;
};

namespace ops {

// Convolutions. All use cross-correlation orientation, stride 1, no padding.
//
//   conv_temporal:       x [B,1,C,T], w [K,1,1,m], b [K]   -> [B,K,C,T-m+1]
//   conv_spatial:        h [B,K,C,T'], w [J,K,C,1], b [J]  -> [B,J,1,T']
//   conv_spatiotemporal: x [B,1,C,T], w [K,1,C,m], b [K]   -> [B,K,1,T-m+1]
template <typename T>
Var conv_temporal(Tape<T>& tape, Var x, Var kernels, Var bias);
template <typename T>
Var conv_spatial(Tape<T>& tape, Var h, Var kernels, Var bias);
template <typename T>
Var conv_spatiotemporal(Tape<T>& tape, Var x, Var kernels, Var bias);

// Mean over windows of `pool` samples along the last axis.
template <typename T>
Var avg_pool_time(Tape<T>& tape, Var x, std::size_t pool, std::size_t stride);

template <typename T>
Var elu(Tape<T>& tape, Var x, T alpha = T(1));

// Normalizes axis 1 of x [B,K,...]. Train mode uses batch statistics and
// updates the running buffers; eval mode uses the running buffers.
template <typename T>
Var batch_norm(Tape<T>& tape, Var x, Var gamma, Var beta, BatchNormBuffers<T> buffers, Mode mode);

// Inverted dropout; identity in eval mode.
template <typename T>
Var dropout(Tape<T>& tape, Var x, double p, Mode mode, Rng& rng);

// x [...,in] * W[out,in]^T + b[out] -> [...,out]
template <typename T>
Var linear(Tape<T>& tape, Var x, Var weight, Var bias);

// a [G,M,K] x b [G,K,N] (or b [G,N,K] when transpose_b) -> [G,M,N]
template <typename T>
Var matmul_batched(Tape<T>& tape, Var a, Var b, bool transpose_b);

// Softmax over the last axis.
template <typename T>
Var softmax(Tape<T>& tape, Var x);

// Layer normalization over the last axis.
template <typename T>
Var layer_norm(Tape<T>& tape, Var x, Var gamma, Var beta, T eps = T(1e-5));

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);
template <typename T>
Var mul(Tape<T>& tape, Var a, Var b);
template <typename T>
Var scale(Tape<T>& tape, Var x, T factor);
// Adds a constant array (no gradient) to x.
template <typename T>
Var add_constant(Tape<T>& tape, Var x, const NdArray<T>& c);
template <typename T>
Var sum(Tape<T>& tape, Var x);
template <typename T>
Var reshape(Tape<T>& tape, Var x, Shape shape);
template <typename T>
Var permute(Tape<T>& tape, Var x, const std::vector<std::size_t>& axes);

// Mean cross-entropy of softmax(logits [B,n]) against integer labels.
template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var logits, std::span<const int> labels);

// Scaled dot-product self-attention over axis 1 of x [B,P,E] with `heads`
// heads, wrapped as layer_norm(x + attention(x)).
template <typename T>
Var multi_head_attention(Tape<T>& tape, Var x, std::size_t heads, const AttentionParams& params,
                         Var ln_gamma, Var ln_beta);

}  // namespace ops
}  // namespace stconv
