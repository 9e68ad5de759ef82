#include "stconv/ops.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "kernels.hpp"

namespace stconv::ops {
namespace {

using detail::axpy;
using detail::dot;

std::string axis_mismatch(const char* op, const char* what, std::size_t got, std::size_t want) {
  return std::string(op) + ": " + what + " is " + std::to_string(got) + ", expected " +
         std::to_string(want);
}

void require_rank(const char* op, const char* name, const Shape& s, std::size_t rank) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": " + name + " must have rank " +
                         std::to_string(rank) + ", got shape " + shape_str(s));
  }
}

void require_axis(const char* op, const char* what, std::size_t got, std::size_t want) {
  if (got != want) throw DimensionError(axis_mismatch(op, what, got, want));
}

void require_same_shape(const char* op, const Shape& a, const Shape& b) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shapes differ, " + shape_str(a) + " vs " +
                         shape_str(b));
  }
}

}  // namespace

// The three convolutions share one formulation: unfold the input into a
// column matrix and multiply by the kernel matrix. Both encoder variants thus
// run on the same GEMM backend.
template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using ConstVecMap = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>;

// col[(c*m + tau), t] = x[c, t + tau] for rows of length T_, output length Tp.
template <typename T>
void unfold(const T* x, std::size_t C, std::size_t T_, std::size_t m, std::size_t Tp, T* col) {
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t tau = 0; tau < m; ++tau) std::copy_n(x + c * T_ + tau, Tp, col + (c * m + tau) * Tp);
  }
}

// Adjoint of unfold: gx[c, t + tau] += gcol[(c*m + tau), t].
template <typename T>
void fold_add(const T* gcol, std::size_t C, std::size_t T_, std::size_t m, std::size_t Tp, T* gx) {
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t tau = 0; tau < m; ++tau) {
      const T* src = gcol + (c * m + tau) * Tp;
      T* dst = gx + c * T_ + tau;
      for (std::size_t t = 0; t < Tp; ++t) dst[t] += src[t];
    }
  }
}

template <typename T>
Var conv_temporal(Tape<T>& tape, Var xv, Var wv, Var bv) {
  const auto& x = tape.value(xv);
  const auto& w = tape.value(wv);
  const auto& b = tape.value(bv);
  constexpr const char* op = "conv_temporal";
  require_rank(op, "input", x.shape(), 4);
  require_rank(op, "kernels", w.shape(), 4);
  require_axis(op, "input axis 1 (feature maps)", x.dim(1), 1);
  require_axis(op, "kernel axis 1 (input maps)", w.dim(1), 1);
  require_axis(op, "kernel axis 2 (channels)", w.dim(2), 1);
  const std::size_t B = x.dim(0), C = x.dim(2), T_ = x.dim(3);
  const std::size_t K = w.dim(0), m = w.dim(3);
  require_axis(op, "bias length", b.size(), K);
  if (m > T_) throw DimensionError(axis_mismatch(op, "kernel length (axis 3)", m, T_));
  const std::size_t Tp = T_ - m + 1;
  const auto CT = static_cast<Eigen::Index>(C * Tp);

  // Per batch item: Y[K, C*Tp] = W[K, m] * col[m, C*Tp] with
  // col[tau, c*Tp + t] = x[c, t + tau].
  auto unfold_rows = [=](const T* xb, T* col) {
    for (std::size_t tau = 0; tau < m; ++tau) {
      for (std::size_t c = 0; c < C; ++c) std::copy_n(xb + c * T_ + tau, Tp, col + tau * C * Tp + c * Tp);
    }
  };
  NdArray<T> y({B, K, C, Tp});
  std::vector<T> col(m * C * Tp);
  ConstMatMap<T> W(w.ptr(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(m));
  for (std::size_t bi = 0; bi < B; ++bi) {
    unfold_rows(x.ptr() + bi * C * T_, col.data());
    MatMap<T> Y(y.ptr() + bi * K * C * Tp, static_cast<Eigen::Index>(K), CT);
    Y.noalias() = W * ConstMatMap<T>(col.data(), static_cast<Eigen::Index>(m), CT);
    Y.colwise() += ConstVecMap<T>(b.ptr(), static_cast<Eigen::Index>(K));
  }

  return tape.record(std::move(y), {xv, wv, bv}, [=](Tape<T>& tp, Var out) {
    const T* xp = tp.value(xv).ptr();
    const T* gy = tp.grad(out).data();
    const bool need_w = tp.requires_grad(wv), need_b = tp.requires_grad(bv), need_x = tp.requires_grad(xv);
    ConstMatMap<T> W(tp.value(wv).ptr(), static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(m));
    RowMat<T> gW = RowMat<T>::Zero(static_cast<Eigen::Index>(K), static_cast<Eigen::Index>(m));
    std::vector<T> col(m * C * Tp), gcol(need_x ? m * C * Tp : 0);
    T* gb = need_b ? tp.grad(bv).data() : nullptr;
    T* gx = need_x ? tp.grad(xv).data() : nullptr;
    for (std::size_t bi = 0; bi < B; ++bi) {
      ConstMatMap<T> GY(gy + bi * K * C * Tp, static_cast<Eigen::Index>(K), CT);
      if (need_w) {
        unfold_rows(xp + bi * C * T_, col.data());
        gW.noalias() += GY * ConstMatMap<T>(col.data(), static_cast<Eigen::Index>(m), CT).transpose();
      }
      if (gb) {
        for (std::size_t k = 0; k < K; ++k) gb[k] += detail::sum(gy + (bi * K + k) * C * Tp, C * Tp);
      }
      if (gx) {
        MatMap<T> GC(gcol.data(), static_cast<Eigen::Index>(m), CT);
        GC.noalias() = W.transpose() * GY;
        T* gxb = gx + bi * C * T_;
        for (std::size_t tau = 0; tau < m; ++tau) {
          for (std::size_t c = 0; c < C; ++c) {
            const T* src = gcol.data() + tau * C * Tp + c * Tp;
            T* dst = gxb + c * T_ + tau;
            for (std::size_t t = 0; t < Tp; ++t) dst[t] += src[t];
          }
        }
      }
    }
    if (need_w) {
      T* gw = tp.grad(wv).data();
      for (std::size_t i = 0; i < K * m; ++i) gw[i] += gW.data()[i];
    }
  });
}

template <typename T>
Var conv_spatial(Tape<T>& tape, Var hv, Var wv, Var bv) {
  const auto& h = tape.value(hv);
  const auto& w = tape.value(wv);
  const auto& b = tape.value(bv);
  constexpr const char* op = "conv_spatial";
  require_rank(op, "input", h.shape(), 4);
  require_rank(op, "kernels", w.shape(), 4);
  const std::size_t B = h.dim(0), K = h.dim(1), C = h.dim(2), Tp = h.dim(3);
  const std::size_t J = w.dim(0);
  require_axis(op, "kernel axis 1 (input maps K)", w.dim(1), K);
  require_axis(op, "kernel axis 2 (channels C)", w.dim(2), C);
  require_axis(op, "kernel axis 3 (time)", w.dim(3), 1);
  require_axis(op, "bias length", b.size(), J);
  const auto KC = static_cast<Eigen::Index>(K * C), JJ = static_cast<Eigen::Index>(J),
             TT = static_cast<Eigen::Index>(Tp);

  // Per batch item: Y[J, Tp] = W[J, K*C] * H[K*C, Tp]; H needs no unfolding.
  NdArray<T> y({B, J, 1, Tp});
  ConstMatMap<T> W(w.ptr(), JJ, KC);
  for (std::size_t bi = 0; bi < B; ++bi) {
    MatMap<T> Y(y.ptr() + bi * J * Tp, JJ, TT);
    Y.noalias() = W * ConstMatMap<T>(h.ptr() + bi * K * C * Tp, KC, TT);
    Y.colwise() += ConstVecMap<T>(b.ptr(), JJ);
  }

  return tape.record(std::move(y), {hv, wv, bv}, [=](Tape<T>& tp, Var out) {
    const T* hp = tp.value(hv).ptr();
    const T* gy = tp.grad(out).data();
    const bool need_w = tp.requires_grad(wv), need_b = tp.requires_grad(bv), need_h = tp.requires_grad(hv);
    ConstMatMap<T> W(tp.value(wv).ptr(), JJ, KC);
    RowMat<T> gW = RowMat<T>::Zero(JJ, KC);
    T* gb = need_b ? tp.grad(bv).data() : nullptr;
    T* gh = need_h ? tp.grad(hv).data() : nullptr;
    for (std::size_t bi = 0; bi < B; ++bi) {
      ConstMatMap<T> GY(gy + bi * J * Tp, JJ, TT);
      if (need_w) gW.noalias() += GY * ConstMatMap<T>(hp + bi * K * C * Tp, KC, TT).transpose();
      if (gb) {
        for (std::size_t j = 0; j < J; ++j) gb[j] += detail::sum(gy + (bi * J + j) * Tp, Tp);
      }
      if (gh) MatMap<T>(gh + bi * K * C * Tp, KC, TT).noalias() += W.transpose() * GY;
    }
    if (need_w) {
      T* gw = tp.grad(wv).data();
      for (Eigen::Index i = 0; i < JJ * KC; ++i) gw[i] += gW.data()[i];
    }
  });
}

template <typename T>
Var conv_spatiotemporal(Tape<T>& tape, Var xv, Var wv, Var bv) {
  const auto& x = tape.value(xv);
  const auto& w = tape.value(wv);
  const auto& b = tape.value(bv);
  constexpr const char* op = "conv_spatiotemporal";
  require_rank(op, "input", x.shape(), 4);
  require_rank(op, "kernels", w.shape(), 4);
  require_axis(op, "input axis 1 (feature maps)", x.dim(1), 1);
  require_axis(op, "kernel axis 1 (input maps)", w.dim(1), 1);
  const std::size_t B = x.dim(0), C = x.dim(2), T_ = x.dim(3);
  const std::size_t K = w.dim(0), m = w.dim(3);
  require_axis(op, "kernel axis 2 (channels C)", w.dim(2), C);
  require_axis(op, "bias length", b.size(), K);
  if (m > T_) throw DimensionError(axis_mismatch(op, "kernel length (axis 3)", m, T_));
  const std::size_t Tp = T_ - m + 1;
  const auto KK = static_cast<Eigen::Index>(K), CM = static_cast<Eigen::Index>(C * m),
             TT = static_cast<Eigen::Index>(Tp);

  // Per batch item: Y[K, Tp] = W[K, C*m] * col[C*m, Tp].
  NdArray<T> y({B, K, 1, Tp});
  std::vector<T> col(C * m * Tp);
  ConstMatMap<T> W(w.ptr(), KK, CM);
  for (std::size_t bi = 0; bi < B; ++bi) {
    unfold(x.ptr() + bi * C * T_, C, T_, m, Tp, col.data());
    MatMap<T> Y(y.ptr() + bi * K * Tp, KK, TT);
    Y.noalias() = W * ConstMatMap<T>(col.data(), CM, TT);
    Y.colwise() += ConstVecMap<T>(b.ptr(), KK);
  }

  return tape.record(std::move(y), {xv, wv, bv}, [=](Tape<T>& tp, Var out) {
    const T* xp = tp.value(xv).ptr();
    const T* gy = tp.grad(out).data();
    const bool need_w = tp.requires_grad(wv), need_b = tp.requires_grad(bv), need_x = tp.requires_grad(xv);
    ConstMatMap<T> W(tp.value(wv).ptr(), KK, CM);
    RowMat<T> gW = RowMat<T>::Zero(KK, CM);
    std::vector<T> col(C * m * Tp), gcol(need_x ? C * m * Tp : 0);
    T* gb = need_b ? tp.grad(bv).data() : nullptr;
    T* gx = need_x ? tp.grad(xv).data() : nullptr;
    for (std::size_t bi = 0; bi < B; ++bi) {
      ConstMatMap<T> GY(gy + bi * K * Tp, KK, TT);
      if (need_w) {
        unfold(xp + bi * C * T_, C, T_, m, Tp, col.data());
        gW.noalias() += GY * ConstMatMap<T>(col.data(), CM, TT).transpose();
      }
      if (gb) {
        for (std::size_t k = 0; k < K; ++k) gb[k] += detail::sum(gy + (bi * K + k) * Tp, Tp);
      }
      if (gx) {
        MatMap<T>(gcol.data(), CM, TT).noalias() = W.transpose() * GY;
        fold_add(gcol.data(), C, T_, m, Tp, gx + bi * C * T_);
      }
    }
    if (need_w) {
      T* gw = tp.grad(wv).data();
      for (Eigen::Index i = 0; i < KK * CM; ++i) gw[i] += gW.data()[i];
    }
  });
}

template <typename T>
Var avg_pool_time(Tape<T>& tape, Var xv, std::size_t pool, std::size_t stride) {
  const auto& x = tape.value(xv);
  if (x.rank() == 0) throw DimensionError("avg_pool_time: input must have a time axis");
  if (pool == 0 || stride == 0) throw ParameterError("avg_pool_time: pool and stride must be >= 1");
  const std::size_t Tp = x.shape().back();
  if (pool > Tp) {
    throw DimensionError("avg_pool_time: pool size " + std::to_string(pool) +
                         " exceeds time axis length " + std::to_string(Tp));
  }
  const std::size_t P = (Tp - pool) / stride + 1;
  const std::size_t outer = x.size() / Tp;
  Shape out_shape = x.shape();
  out_shape.back() = P;
  NdArray<T> y(out_shape);
  const T inv = T(1) / static_cast<T>(pool);
  for (std::size_t r = 0; r < outer; ++r) {
    const T* xr = x.ptr() + r * Tp;
    T* yr = y.ptr() + r * P;
    for (std::size_t p = 0; p < P; ++p) yr[p] = detail::sum(xr + p * stride, pool) * inv;
  }
  return tape.record(std::move(y), {xv}, [=](Tape<T>& tp, Var out) {
    const T* gy = tp.grad(out).data();
    T* gx = tp.grad(xv).data();
    for (std::size_t r = 0; r < outer; ++r) {
      for (std::size_t p = 0; p < P; ++p) {
        const T g = gy[r * P + p] * inv;
        T* gxr = gx + r * Tp + p * stride;
        for (std::size_t i = 0; i < pool; ++i) gxr[i] += g;
      }
    }
  });
}

template <typename T>
Var elu(Tape<T>& tape, Var xv, T alpha) {
  const auto& x = tape.value(xv);
  NdArray<T> y(x.shape());
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x[i];
    y[i] = v > T(0) ? v : alpha * std::expm1(v);
  }
  return tape.record(std::move(y), {xv}, [=](Tape<T>& tp, Var out) {
    const auto& x = tp.value(xv);
    const auto& y = tp.value(out);
    const T* gy = tp.grad(out).data();
    T* gx = tp.grad(xv).data();
    for (std::size_t i = 0; i < n; ++i) gx[i] += gy[i] * (x[i] > T(0) ? T(1) : y[i] + alpha);
  });
}

template <typename T>
Var batch_norm(Tape<T>& tape, Var xv, Var gv, Var bv, BatchNormBuffers<T> buffers, Mode mode) {
  const auto& x = tape.value(xv);
  const auto& gamma = tape.value(gv);
  const auto& beta = tape.value(bv);
  if (x.rank() < 2) throw DimensionError("batch_norm: input needs a batch and a feature axis");
  if (!buffers.running_mean || !buffers.running_var) {
    throw ContractError("batch_norm: running statistics buffers are required");
  }
  const std::size_t B = x.dim(0), K = x.dim(1);
  const std::size_t inner = x.size() / (B * K);
  require_axis("batch_norm", "gamma length", gamma.size(), K);
  require_axis("batch_norm", "beta length", beta.size(), K);
  require_axis("batch_norm", "running mean length", buffers.running_mean->size(), K);
  require_axis("batch_norm", "running var length", buffers.running_var->size(), K);
  const std::size_t count = B * inner;

  std::vector<T> mean(K), inv_std(K);
  if (mode == Mode::kTrain) {
    for (std::size_t k = 0; k < K; ++k) {
      T s = 0;
      for (std::size_t bi = 0; bi < B; ++bi) s += detail::sum(x.ptr() + (bi * K + k) * inner, inner);
      const T mu = s / static_cast<T>(count);
      T ss = 0;
      for (std::size_t bi = 0; bi < B; ++bi) {
        const T* row = x.ptr() + (bi * K + k) * inner;
        for (std::size_t i = 0; i < inner; ++i) ss += (row[i] - mu) * (row[i] - mu);
      }
      const T var = ss / static_cast<T>(count);
      mean[k] = mu;
      inv_std[k] = T(1) / std::sqrt(var + buffers.eps);
      const T unbiased = count > 1 ? ss / static_cast<T>(count - 1) : var;
      auto& rm = (*buffers.running_mean)[k];
      auto& rv = (*buffers.running_var)[k];
      rm = (T(1) - buffers.momentum) * rm + buffers.momentum * mu;
      rv = (T(1) - buffers.momentum) * rv + buffers.momentum * unbiased;
    }
  } else {
    for (std::size_t k = 0; k < K; ++k) {
      mean[k] = (*buffers.running_mean)[k];
      inv_std[k] = T(1) / std::sqrt((*buffers.running_var)[k] + buffers.eps);
    }
  }

  NdArray<T> y(x.shape());
  std::vector<T> xhat(x.size());
  for (std::size_t bi = 0; bi < B; ++bi) {
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t off = (bi * K + k) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const T h = (x[off + i] - mean[k]) * inv_std[k];
        xhat[off + i] = h;
        y[off + i] = gamma[k] * h + beta[k];
      }
    }
  }

  const bool train = mode == Mode::kTrain;
  return tape.record(std::move(y), {xv, gv, bv},
                     [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& tp, Var out) {
    const auto& gamma = tp.value(gv);
    const T* gy = tp.grad(out).data();
    T* gg = tp.requires_grad(gv) ? tp.grad(gv).data() : nullptr;
    T* gb = tp.requires_grad(bv) ? tp.grad(bv).data() : nullptr;
    T* gx = tp.requires_grad(xv) ? tp.grad(xv).data() : nullptr;
    for (std::size_t k = 0; k < K; ++k) {
      T sum_g = 0, sum_gh = 0;
      for (std::size_t bi = 0; bi < B; ++bi) {
        const std::size_t off = (bi * K + k) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          sum_g += gy[off + i];
          sum_gh += gy[off + i] * xhat[off + i];
        }
      }
      if (gg) gg[k] += sum_gh;
      if (gb) gb[k] += sum_g;
      if (!gx) continue;
      const T scale = gamma[k] * inv_std[k];
      const T mean_g = sum_g / static_cast<T>(count);
      const T mean_gh = sum_gh / static_cast<T>(count);
      for (std::size_t bi = 0; bi < B; ++bi) {
        const std::size_t off = (bi * K + k) * inner;
        for (std::size_t i = 0; i < inner; ++i) {
          gx[off + i] += train ? scale * (gy[off + i] - mean_g - xhat[off + i] * mean_gh)
                               : scale * gy[off + i];
        }
      }
    }
  });
}

template <typename T>
Var dropout(Tape<T>& tape, Var xv, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ParameterError("dropout: probability must lie in [0,1), got " + std::to_string(p));
  }
  if (mode == Mode::kEval || p == 0.0) return xv;
  const auto& x = tape.value(xv);
  const T keep_scale = T(1.0 / (1.0 - p));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<T> mask(x.size());
  NdArray<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = u(rng) >= p ? keep_scale : T(0);
    y[i] = x[i] * mask[i];
  }
  return tape.record(std::move(y), {xv}, [=, mask = std::move(mask)](Tape<T>& tp, Var out) {
    const T* gy = tp.grad(out).data();
    T* gx = tp.grad(xv).data();
    for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += gy[i] * mask[i];
  });
}

template <typename T>
Var linear(Tape<T>& tape, Var xv, Var wv, Var bv) {
  const auto& x = tape.value(xv);
  const auto& w = tape.value(wv);
  const auto& b = tape.value(bv);
  require_rank("linear", "weight", w.shape(), 2);
  if (x.rank() == 0) throw DimensionError("linear: input must have a feature axis");
  const std::size_t out_f = w.dim(0), in_f = w.dim(1);
  require_axis("linear", "input feature axis", x.shape().back(), in_f);
  require_axis("linear", "bias length", b.size(), out_f);
  const std::size_t rows = x.size() / in_f;
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  NdArray<T> y(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * in_f;
    for (std::size_t o = 0; o < out_f; ++o) y[r * out_f + o] = b[o] + dot(xr, w.ptr() + o * in_f, in_f);
  }
  return tape.record(std::move(y), {xv, wv, bv}, [=](Tape<T>& tp, Var out) {
    const T* xp = tp.value(xv).ptr();
    const T* wp = tp.value(wv).ptr();
    const T* gy = tp.grad(out).data();
    T* gw = tp.requires_grad(wv) ? tp.grad(wv).data() : nullptr;
    T* gb = tp.requires_grad(bv) ? tp.grad(bv).data() : nullptr;
    T* gx = tp.requires_grad(xv) ? tp.grad(xv).data() : nullptr;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t o = 0; o < out_f; ++o) {
        const T g = gy[r * out_f + o];
        if (gw) axpy(g, xp + r * in_f, gw + o * in_f, in_f);
        if (gb) gb[o] += g;
        if (gx) axpy(g, wp + o * in_f, gx + r * in_f, in_f);
      }
    }
  });
}

template <typename T>
Var matmul_batched(Tape<T>& tape, Var av, Var bv, bool transpose_b) {
  const auto& a = tape.value(av);
  const auto& b = tape.value(bv);
  require_rank("matmul_batched", "lhs", a.shape(), 3);
  require_rank("matmul_batched", "rhs", b.shape(), 3);
  const std::size_t G = a.dim(0), M = a.dim(1), K = a.dim(2);
  require_axis("matmul_batched", "rhs batch axis", b.dim(0), G);
  const std::size_t N = transpose_b ? b.dim(1) : b.dim(2);
  require_axis("matmul_batched", "rhs contraction axis", transpose_b ? b.dim(2) : b.dim(1), K);
  // b element (k, n) of group g
  auto bidx = [=](std::size_t g, std::size_t k, std::size_t n) {
    return transpose_b ? (g * N + n) * K + k : (g * K + k) * N + n;
  };
  NdArray<T> y({G, M, N});
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t i = 0; i < M; ++i) {
      for (std::size_t n = 0; n < N; ++n) {
        T s = 0;
        for (std::size_t k = 0; k < K; ++k) s += a[(g * M + i) * K + k] * b[bidx(g, k, n)];
        y[(g * M + i) * N + n] = s;
      }
    }
  }
  return tape.record(std::move(y), {av, bv}, [=](Tape<T>& tp, Var out) {
    const auto& a = tp.value(av);
    const auto& b = tp.value(bv);
    const T* gy = tp.grad(out).data();
    T* ga = tp.requires_grad(av) ? tp.grad(av).data() : nullptr;
    T* gb = tp.requires_grad(bv) ? tp.grad(bv).data() : nullptr;
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t i = 0; i < M; ++i) {
        for (std::size_t n = 0; n < N; ++n) {
          const T go = gy[(g * M + i) * N + n];
          for (std::size_t k = 0; k < K; ++k) {
            if (ga) ga[(g * M + i) * K + k] += go * b[bidx(g, k, n)];
            if (gb) gb[bidx(g, k, n)] += go * a[(g * M + i) * K + k];
          }
        }
      }
    }
  });
}

template <typename T>
Var softmax(Tape<T>& tape, Var xv) {
  const auto& x = tape.value(xv);
  if (x.rank() == 0) throw DimensionError("softmax: input must have a last axis");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  NdArray<T> y(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * n;
    T* yr = y.ptr() + r * n;
    T mx = *std::max_element(xr, xr + n);
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) s += (yr[i] = std::exp(xr[i] - mx));
    for (std::size_t i = 0; i < n; ++i) yr[i] /= s;
  }
  return tape.record(std::move(y), {xv}, [=](Tape<T>& tp, Var out) {
    const auto& y = tp.value(out);
    const T* gy = tp.grad(out).data();
    T* gx = tp.grad(xv).data();
    for (std::size_t r = 0; r < rows; ++r) {
      const T d = dot(gy + r * n, y.ptr() + r * n, n);
      for (std::size_t i = 0; i < n; ++i) gx[r * n + i] += y[r * n + i] * (gy[r * n + i] - d);
    }
  });
}

template <typename T>
Var layer_norm(Tape<T>& tape, Var xv, Var gv, Var bv, T eps) {
  const auto& x = tape.value(xv);
  const auto& gamma = tape.value(gv);
  const auto& beta = tape.value(bv);
  if (x.rank() == 0) throw DimensionError("layer_norm: input must have a last axis");
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.size() / n;
  require_axis("layer_norm", "gamma length", gamma.size(), n);
  require_axis("layer_norm", "beta length", beta.size(), n);
  NdArray<T> y(x.shape());
  std::vector<T> xhat(x.size()), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.ptr() + r * n;
    const T mu = detail::sum(xr, n) / static_cast<T>(n);
    T ss = 0;
    for (std::size_t i = 0; i < n; ++i) ss += (xr[i] - mu) * (xr[i] - mu);
    inv_std[r] = T(1) / std::sqrt(ss / static_cast<T>(n) + eps);
    for (std::size_t i = 0; i < n; ++i) {
      xhat[r * n + i] = (xr[i] - mu) * inv_std[r];
      y[r * n + i] = gamma[i] * xhat[r * n + i] + beta[i];
    }
  }
  return tape.record(std::move(y), {xv, gv, bv},
                     [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& tp, Var out) {
    const auto& gamma = tp.value(gv);
    const T* gy = tp.grad(out).data();
    T* gg = tp.requires_grad(gv) ? tp.grad(gv).data() : nullptr;
    T* gb = tp.requires_grad(bv) ? tp.grad(bv).data() : nullptr;
    T* gx = tp.requires_grad(xv) ? tp.grad(xv).data() : nullptr;
    std::vector<T> gh(n);
    for (std::size_t r = 0; r < rows; ++r) {
      const T* gyr = gy + r * n;
      const T* hr = xhat.data() + r * n;
      T mean_g = 0, mean_gh = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (gg) gg[i] += gyr[i] * hr[i];
        if (gb) gb[i] += gyr[i];
        gh[i] = gyr[i] * gamma[i];
        mean_g += gh[i];
        mean_gh += gh[i] * hr[i];
      }
      if (!gx) continue;
      mean_g /= static_cast<T>(n);
      mean_gh /= static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) {
        gx[r * n + i] += inv_std[r] * (gh[i] - mean_g - hr[i] * mean_gh);
      }
    }
  });
}

template <typename T>
Var add(Tape<T>& tape, Var av, Var bv) {
  const auto& a = tape.value(av);
  const auto& b = tape.value(bv);
  require_same_shape("add", a.shape(), b.shape());
  NdArray<T> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return tape.record(std::move(y), {av, bv}, [=](Tape<T>& tp, Var out) {
    const auto gy = tp.grad(out);
    if (tp.requires_grad(av)) {
      auto ga = tp.grad(av);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    }
    if (tp.requires_grad(bv)) {
      auto gb = tp.grad(bv);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
    }
  });
}

template <typename T>
Var mul(Tape<T>& tape, Var av, Var bv) {
  const auto& a = tape.value(av);
  const auto& b = tape.value(bv);
  require_same_shape("mul", a.shape(), b.shape());
  NdArray<T> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
  return tape.record(std::move(y), {av, bv}, [=](Tape<T>& tp, Var out) {
    const auto& a = tp.value(av);
    const auto& b = tp.value(bv);
    const auto gy = tp.grad(out);
    if (tp.requires_grad(av)) {
      auto ga = tp.grad(av);
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * b[i];
    }
    if (tp.requires_grad(bv)) {
      auto gb = tp.grad(bv);
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * a[i];
    }
  });
}

template <typename T>
Var scale(Tape<T>& tape, Var xv, T factor) {
  const auto& x = tape.value(xv);
  NdArray<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * factor;
  return tape.record(std::move(y), {xv}, [=](Tape<T>& tp, Var out) {
    const auto gy = tp.grad(out);
    auto gx = tp.grad(xv);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * factor;
  });
}

template <typename T>
Var add_constant(Tape<T>& tape, Var xv, const NdArray<T>& c) {
  const auto& x = tape.value(xv);
  require_same_shape("add_constant", x.shape(), c.shape());
  NdArray<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] + c[i];
  return tape.record(std::move(y), {xv}, [=](Tape<T>& tp, Var out) {
    const auto gy = tp.grad(out);
    auto gx = tp.grad(xv);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

template <typename T>
Var sum(Tape<T>& tape, Var xv) {
  const auto& x = tape.value(xv);
  T s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
  return tape.record(NdArray<T>::scalar(s), {xv}, [=](Tape<T>& tp, Var out) {
    const T g = tp.grad(out)[0];
    auto gx = tp.grad(xv);
    for (auto& v : gx) v += g;
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var xv, Shape shape) {
  NdArray<T> y = tape.value(xv).reshaped(std::move(shape));
  return tape.record(std::move(y), {xv}, [=](Tape<T>& tp, Var out) {
    const auto gy = tp.grad(out);
    auto gx = tp.grad(xv);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i];
  });
}

template <typename T>
Var permute(Tape<T>& tape, Var xv, const std::vector<std::size_t>& axes) {
  const auto& x = tape.value(xv);
  const std::size_t r = x.rank();
  if (axes.size() != r) throw DimensionError("permute: axis list length does not match rank");
  std::vector<bool> seen(r, false);
  for (auto a : axes) {
    if (a >= r || seen[a]) throw DimensionError("permute: axes must be a permutation of 0..rank-1");
    seen[a] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.dim(axes[i]);
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * x.dim(i + 1);
  // src[i] is the input offset of output element i
  std::vector<std::size_t> src(x.size());
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t off = 0;
    for (std::size_t d = 0; d < r; ++d) off += idx[d] * in_strides[axes[d]];
    src[i] = off;
    for (std::size_t d = r; d-- > 0;) {
      if (++idx[d] < out_shape[d]) break;
      idx[d] = 0;
    }
  }
  NdArray<T> y(out_shape);
  for (std::size_t i = 0; i < src.size(); ++i) y[i] = x[src[i]];
  return tape.record(std::move(y), {xv}, [=, src = std::move(src)](Tape<T>& tp, Var out) {
    const auto gy = tp.grad(out);
    auto gx = tp.grad(xv);
    for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += gy[i];
  });
}

template <typename T>
Var softmax_cross_entropy(Tape<T>& tape, Var lv, std::span<const int> labels) {
  const auto& logits = tape.value(lv);
  require_rank("softmax_cross_entropy", "logits", logits.shape(), 2);
  const std::size_t B = logits.dim(0), n = logits.dim(1);
  require_axis("softmax_cross_entropy", "label count", labels.size(), B);
  std::vector<T> prob(logits.size());
  std::vector<int> lab(labels.begin(), labels.end());
  T loss = 0;
  for (std::size_t bi = 0; bi < B; ++bi) {
    if (lab[bi] < 0 || static_cast<std::size_t>(lab[bi]) >= n) {
      throw DataError("softmax_cross_entropy: label " + std::to_string(lab[bi]) +
                      " outside 0.." + std::to_string(n - 1));
    }
    const T* row = logits.ptr() + bi * n;
    const T mx = *std::max_element(row, row + n);
    T s = 0;
    for (std::size_t i = 0; i < n; ++i) s += (prob[bi * n + i] = std::exp(row[i] - mx));
    for (std::size_t i = 0; i < n; ++i) prob[bi * n + i] /= s;
    loss += -(row[lab[bi]] - mx - std::log(s));
  }
  loss /= static_cast<T>(B);
  return tape.record(NdArray<T>::scalar(loss), {lv},
                     [=, prob = std::move(prob), lab = std::move(lab)](Tape<T>& tp, Var out) {
    const T g = tp.grad(out)[0] / static_cast<T>(B);
    auto gx = tp.grad(lv);
    for (std::size_t bi = 0; bi < B; ++bi) {
      for (std::size_t i = 0; i < n; ++i) {
        const T onehot = static_cast<std::size_t>(lab[bi]) == i ? T(1) : T(0);
        gx[bi * n + i] += g * (prob[bi * n + i] - onehot);
      }
    }
  });
}

template <typename T>
Var multi_head_attention(Tape<T>& tape, Var x, std::size_t heads, const AttentionParams& p,
                         Var ln_gamma, Var ln_beta) {
  const Shape& s = tape.shape(x);
  require_rank("multi_head_attention", "input", s, 3);
  const std::size_t B = s[0], P = s[1], E = s[2];
  if (heads == 0 || E % heads != 0) {
    throw DimensionError("multi_head_attention: " + std::to_string(heads) +
                         " heads do not divide embedding width " + std::to_string(E));
  }
  const std::size_t D = E / heads;
  auto split = [&](Var v) {
    Var r = reshape(tape, v, {B, P, heads, D});
    r = permute(tape, r, {0, 2, 1, 3});
    return reshape(tape, r, {B * heads, P, D});
  };
  Var q = split(linear(tape, x, p.wq, p.bq));
  Var k = split(linear(tape, x, p.wk, p.bk));
  Var v = split(linear(tape, x, p.wv, p.bv));
  Var scores = scale(tape, matmul_batched(tape, q, k, true), T(1) / std::sqrt(static_cast<T>(D)));
  Var attn = softmax(tape, scores);
  Var ctx = matmul_batched(tape, attn, v, false);
  ctx = reshape(tape, ctx, {B, heads, P, D});
  ctx = permute(tape, ctx, {0, 2, 1, 3});
  ctx = reshape(tape, ctx, {B, P, E});
  Var projected = linear(tape, ctx, p.wo, p.bo);
  return layer_norm(tape, add(tape, x, projected), ln_gamma, ln_beta);
}

#define STCONV_INSTANTIATE_OPS(T)                                                          \
  template Var conv_temporal<T>(Tape<T>&, Var, Var, Var);                                  \
  template Var conv_spatial<T>(Tape<T>&, Var, Var, Var);                                   \
  template Var conv_spatiotemporal<T>(Tape<T>&, Var, Var, Var);                            \
  template Var avg_pool_time<T>(Tape<T>&, Var, std::size_t, std::size_t);                  \
  template Var elu<T>(Tape<T>&, Var, T);                                                   \
  template Var batch_norm<T>(Tape<T>&, Var, Var, Var, BatchNormBuffers<T>, Mode);          \
  template Var dropout<T>(Tape<T>&, Var, double, Mode, Rng&);                              \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                         \
  template Var matmul_batched<T>(Tape<T>&, Var, Var, bool);                                \
  template Var softmax<T>(Tape<T>&, Var);                                                  \
  template Var layer_norm<T>(Tape<T>&, Var, Var, Var, T);                                  \
  template Var add<T>(Tape<T>&, Var, Var);                                                 \
  template Var mul<T>(Tape<T>&, Var, Var);                                                 \
  template Var scale<T>(Tape<T>&, Var, T);                                                 \
  template Var add_constant<T>(Tape<T>&, Var, const NdArray<T>&);                          \
  template Var sum<T>(Tape<T>&, Var);                                                      \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                           \
  template Var permute<T>(Tape<T>&, Var, const std::vector<std::size_t>&);                 \
  template Var softmax_cross_entropy<T>(Tape<T>&, Var, std::span<const int>);              \
  template Var multi_head_attention<T>(Tape<T>&, Var, std::size_t, const AttentionParams&, \
                                       Var, Var);

STCONV_INSTANTIATE_OPS(float)
STCONV_INSTANTIATE_OPS(double)

#undef STCONV_INSTANTIATE_OPS

}  // namespace stconv::ops
