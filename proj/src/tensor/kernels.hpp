#pragma once

#include <cstddef>

namespace stconv::detail {

// y += a * x
template <typename T>
inline void axpy(T a, const T* __restrict x, T* __restrict y, std::size_t n) {
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
inline T dot(const T* __restrict x, const T* __restrict y, std::size_t n) {
  T s = T(0);
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

template <typename T>
inline T sum(const T* x, std::size_t n) {
  T s = T(0);
#pragma omp simd reduction(+ : s)
  for (std::size_t i = 0; i < n; ++i) s += x[i];
  return s;
}

}  // namespace stconv::detail

namespace stconv::detail {

// y += a[0]*x0 + a[1]*x1 + a[2]*x2 + a[3]*x3; one pass over y.
template <typename T>
inline void axpy4(const T* a, const T* __restrict x0, const T* __restrict x1, const T* __restrict x2,
                  const T* __restrict x3, T* __restrict y, std::size_t n) {
  const T a0 = a[0], a1 = a[1], a2 = a[2], a3 = a[3];
#pragma omp simd
  for (std::size_t i = 0; i < n; ++i) y[i] += a0 * x0[i] + a1 * x1[i] + a2 * x2[i] + a3 * x3[i];
}

// out[r] += dot(x, y_r) for four rows sharing one pass over x.
template <typename T>
inline void dot4(const T* __restrict x, const T* __restrict y0, const T* __restrict y1, const T* __restrict y2,
                 const T* __restrict y3, std::size_t n, T* out) {
  T s0 = T(0), s1 = T(0), s2 = T(0), s3 = T(0);
#pragma omp simd reduction(+ : s0, s1, s2, s3)
  for (std::size_t i = 0; i < n; ++i) {
    s0 += x[i] * y0[i];
    s1 += x[i] * y1[i];
    s2 += x[i] * y2[i];
    s3 += x[i] * y3[i];
  }
  out[0] += s0;
  out[1] += s1;
  out[2] += s2;
  out[3] += s3;
}

// y += sum_r a[r] * x(r) over `count` sources, four at a time.
template <typename T, typename Src>
inline void axpy_many(const T* a, Src x, std::size_t count, T* y, std::size_t n) {
  std::size_t r = 0;
  for (; r + 4 <= count; r += 4) axpy4(a + r, x(r), x(r + 1), x(r + 2), x(r + 3), y, n);
  for (; r < count; ++r) axpy(a[r], x(r), y, n);
}

// out[r] += dot(x, y(r)) over `count` rows, four at a time.
template <typename T, typename Src>
inline void dot_many(const T* x, Src y, std::size_t count, std::size_t n, T* out) {
  std::size_t r = 0;
  for (; r + 4 <= count; r += 4) dot4(x, y(r), y(r + 1), y(r + 2), y(r + 3), n, out + r);
  for (; r < count; ++r) out[r] += dot(x, y(r), n);
}

}  // namespace stconv::detail
