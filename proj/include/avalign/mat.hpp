// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define AVALIGN_HAVE_AVX2_FMA 1
#endif

#include "avalign/errors.hpp"

namespace avalign {

// Dense row-major matrix. float for production passes, double for the
// gradient-check shadow path; both instantiations share all math code.
template <typename T>
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;  // row-major, rows*cols

  Mat() = default;
  Mat(std::size_t r, std::size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

  T& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  T* row(std::size_t r) { return data.data() + r * cols; }
  const T* row(std::size_t r) const { return data.data() + r * cols; }
  std::size_t size() const { return data.size(); }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }

  template <typename U>
  Mat<U> cast() const {
    Mat<U> out(rows, cols);
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(double(v))) return false;
    return true;
  }
};

using MatF = Mat<float>;
using MatD = Mat<double>;

inline std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename T>
Mat<T> transpose(const Mat<T>& m) {
  Mat<T> t(m.cols, m.rows);
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t c = 0; c < m.cols; ++c) t.at(c, r) = m.at(r, c);
  return t;
}

// ---------------------------------------------------------------------------
// Matrix products.
//
// Everything runs through one dot kernel over contiguous row pairs. The
// accumulation pattern depends only on the inner length k, never on where an
// element sits in the output, so permuting batch rows permutes results
// bitwise and every reduction has one fixed order. Keep this property when
// touching the kernels; it is load-bearing for the determinism guarantees.
// ---------------------------------------------------------------------------
namespace detail {

#ifdef AVALIGN_HAVE_AVX2_FMA
inline float row_dot(const float* a, const float* b, std::size_t k) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= k; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  if (i + 8 <= k) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    i += 8;
  }
  const __m256 s = _mm256_add_ps(acc0, acc1);
  __m128 q = _mm_add_ps(_mm256_castps256_ps128(s), _mm256_extractf128_ps(s, 1));
  q = _mm_add_ps(q, _mm_movehl_ps(q, q));
  q = _mm_add_ss(q, _mm_shuffle_ps(q, q, 1));
  float r = _mm_cvtss_f32(q);
  for (; i < k; ++i) r += a[i] * b[i];
  return r;
}
#else
inline float row_dot(const float* a, const float* b, std::size_t k) {
  float acc[8] = {};
  std::size_t i = 0;
  for (; i + 8 <= k; i += 8)
    for (std::size_t l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
  float r = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  for (; i < k; ++i) r += a[i] * b[i];
  return r;
}
#endif

inline double row_dot(const double* a, const double* b, std::size_t k) {
  double acc[4] = {};
  std::size_t i = 0;
  for (; i + 4 <= k; i += 4)
    for (std::size_t l = 0; l < 4; ++l) acc[l] += a[i + l] * b[i + l];
  double r = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  for (; i < k; ++i) r += a[i] * b[i];
  return r;
}

}  // namespace detail

// y = a * b^T, written into preallocated storage (y keeps its data pointer;
// optimizer state holds views into gradient tensors).
template <typename T>
void gemm_nt_into(const Mat<T>& a, const Mat<T>& b, Mat<T>& y) {
  if (a.cols != b.cols)
    throw DimensionError("gemm_nt: inner dims differ: " + shape_str(a.rows, a.cols) + " vs " +
                         shape_str(b.rows, b.cols));
  if (y.rows != a.rows || y.cols != b.rows)
    throw DimensionError("gemm_nt: output is " + shape_str(y.rows, y.cols) + ", want " +
                         shape_str(a.rows, b.rows));
  const std::size_t k = a.cols;
  constexpr std::size_t kRowTile = 6;  // rows sharing each b-row load
  for (std::size_t i0 = 0; i0 < a.rows; i0 += kRowTile) {
    const std::size_t ilim = std::min(a.rows, i0 + kRowTile);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const T* bj = b.row(j);
      for (std::size_t i = i0; i < ilim; ++i)
        y.at(i, j) = detail::row_dot(a.row(i), bj, k);
    }
  }
}

// y = a * b^T   (a: n x k, b: m x k -> y: n x m)
template <typename T>
Mat<T> gemm_nt(const Mat<T>& a, const Mat<T>& b) {
  Mat<T> y(a.rows, b.rows);
  gemm_nt_into(a, b, y);
  return y;
}

// y = a * b   (a: n x k, b: k x m -> y: n x m)
template <typename T>
Mat<T> gemm_nn(const Mat<T>& a, const Mat<T>& b) {
  if (a.cols != b.rows)
    throw DimensionError("gemm_nn: inner dims differ: " + shape_str(a.rows, a.cols) + " vs " +
                         shape_str(b.rows, b.cols));
  return gemm_nt(a, transpose(b));
}

// y = a^T * b   (a: k x n, b: k x m -> y: n x m)
template <typename T>
Mat<T> gemm_tn(const Mat<T>& a, const Mat<T>& b) {
  if (a.rows != b.rows)
    throw DimensionError("gemm_tn: inner dims differ: " + shape_str(a.rows, a.cols) + " vs " +
                         shape_str(b.rows, b.cols));
  return gemm_nt(transpose(a), transpose(b));
}

template <typename T>
void gemm_tn_into(const Mat<T>& a, const Mat<T>& b, Mat<T>& y) {
  if (a.rows != b.rows)
    throw DimensionError("gemm_tn: inner dims differ: " + shape_str(a.rows, a.cols) + " vs " +
                         shape_str(b.rows, b.cols));
  gemm_nt_into(transpose(a), transpose(b), y);
}

// Row Euclidean norm, accumulated in double.
template <typename T>
double row_norm(const Mat<T>& m, std::size_t r) {
  double s = 0.0;
  const T* p = m.row(r);
  for (std::size_t c = 0; c < m.cols; ++c) s += double(p[c]) * double(p[c]);
  return std::sqrt(s);
}

// Normalizes each row to unit length; zero rows pass through untouched.
// Returns the cached norms so a backward pass can reuse them.
template <typename T>
std::vector<double> l2_normalize_rows_inplace(Mat<T>& m) {
  std::vector<double> norms(m.rows);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double n = row_norm(m, r);
    norms[r] = n;
    if (n == 0.0) continue;
    T* p = m.row(r);
    T inv = T(1.0 / n);
    for (std::size_t c = 0; c < m.cols; ++c) p[c] *= inv;
  }
  return norms;
}

// Backward of row normalization: dx = (dy - y * (y . dy)) / ||x||.
// `normalized` is the forward output, `norms` the cached input norms.
template <typename T>
Mat<T> l2_normalize_rows_backward(const Mat<T>& normalized, const std::vector<double>& norms,
                                  const Mat<T>& grad_out) {
  Mat<T> grad_in(normalized.rows, normalized.cols);
  for (std::size_t r = 0; r < normalized.rows; ++r) {
    const T* y = normalized.row(r);
    const T* g = grad_out.row(r);
    T* gi = grad_in.row(r);
    if (norms[r] == 0.0) {  // zero row passed through, gradient does too
      for (std::size_t c = 0; c < normalized.cols; ++c) gi[c] = g[c];
      continue;
    }
    double dot = 0.0;
    for (std::size_t c = 0; c < normalized.cols; ++c) dot += double(y[c]) * double(g[c]);
    double inv = 1.0 / norms[r];
    for (std::size_t c = 0; c < normalized.cols; ++c)
      gi[c] = T((double(g[c]) - double(y[c]) * dot) * inv);
  }
  return grad_in;
}

}  // namespace avalign
