#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "greskit/tensor.hpp"

namespace greskit {

// ---- GEMM kernels. All accumulate into c (callers zero it when needed). ----

// c[m x n] += a[m x k] * b[k x n]
template <typename T>
void gemm_nn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    T* crow = c + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      T av = arow[l];
      if (av == T(0)) continue;
      const T* brow = b + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m x n] += a[m x k] * b[n x k]^T
template <typename T>
void gemm_nt_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<std::size_t>(i) * k;
    T* crow = c + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + static_cast<std::size_t>(j) * k;
      T acc = T(0);
      for (int l = 0; l < k; ++l) acc += arow[l] * brow[l];
      crow[j] += acc;
    }
  }
}

// c[m x n] += a[k x m]^T * b[k x n]
template <typename T>
void gemm_tn_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int l = 0; l < k; ++l) {
    const T* arow = a + static_cast<std::size_t>(l) * m;
    const T* brow = b + static_cast<std::size_t>(l) * n;
    for (int i = 0; i < m; ++i) {
      T av = arow[i];
      if (av == T(0)) continue;
      T* crow = c + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
    throw ShapeError("matmul: incompatible " + a.shape_str() + " * " + b.shape_str());
  Tensor<T> c({a.rows(), b.cols()});
  gemm_nn_acc(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  if (a.rank() != 2) throw ShapeError("transpose: rank-2 required, got " + a.shape_str());
  Tensor<T> t({a.cols(), a.rows()});
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
  return t;
}

// ---- Pointwise ----

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.vec()) v = T(1) / (T(1) + std::exp(-v));
  return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.vec()) v = std::max(v, T(0));
  return y;
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.vec())
    v = T(0.5) * v * (T(1) + std::erf(v / std::sqrt(T(2))));
  return y;
}

// Row-wise softmax with max subtraction; rows sum to one by construction.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  if (x.rank() != 2) throw ShapeError("softmax_rows: rank-2 required, got " + x.shape_str());
  Tensor<T> y({x.rows(), x.cols()});
  for (int i = 0; i < x.rows(); ++i) {
    T mx = x.at(i, 0);
    for (int j = 1; j < x.cols(); ++j) mx = std::max(mx, x.at(i, j));
    T sum = T(0);
    for (int j = 0; j < x.cols(); ++j) {
      T e = std::exp(x.at(i, j) - mx);
      y.at(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < x.cols(); ++j) y.at(i, j) /= sum;
  }
  return y;
}

// ---- Spatial ops over cell-major feature rows ----
// Map layout: a [h*w x d] tensor whose row (y*w + x) is the feature of cell
// (y, x); or a [n x h*w] tensor whose rows are flattened maps.

// Mean over stride x stride blocks; x is [h*w x d].
template <typename T>
Tensor<T> avg_pool_cells(const Tensor<T>& x, int h, int w, int stride) {
  if (x.rank() != 2 || x.rows() != h * w)
    throw ShapeError("avg_pool_cells: rows must equal h*w");
  if (stride <= 0 || h % stride || w % stride)
    throw ShapeError("avg_pool_cells: stride must divide h and w");
  int ho = h / stride, wo = w / stride, d = x.cols();
  Tensor<T> y({ho * wo, d});
  T inv = T(1) / static_cast<T>(stride * stride);
  for (int yy = 0; yy < ho; ++yy)
    for (int xx = 0; xx < wo; ++xx) {
      T* out = y.data() + static_cast<std::size_t>(yy * wo + xx) * d;
      for (int dy = 0; dy < stride; ++dy)
        for (int dx = 0; dx < stride; ++dx) {
          const T* in =
              x.data() + static_cast<std::size_t>((yy * stride + dy) * w + xx * stride + dx) * d;
          for (int c = 0; c < d; ++c) out[c] += in[c];
        }
      for (int c = 0; c < d; ++c) out[c] *= inv;
    }
  return y;
}

enum class Upsample { nearest, bilinear };

// Per-axis source taps for a x2 upsample of an axis of length n.
// Sample point for output o is (o + 0.5)/2 - 0.5, clamped to the valid range.
struct UpTap {
  int i0, i1;
  double w0, w1;
};

inline std::vector<UpTap> upsample2x_taps(int n, Upsample mode) {
  std::vector<UpTap> taps(static_cast<std::size_t>(2 * n));
  for (int o = 0; o < 2 * n; ++o) {
    if (mode == Upsample::nearest) {
      taps[o] = {o / 2, o / 2, 1.0, 0.0};
    } else {
      double u = (o + 0.5) / 2.0 - 0.5;
      double f = std::floor(u);
      int i0 = static_cast<int>(f);
      double frac = u - f;
      int lo = std::clamp(i0, 0, n - 1);
      int hi = std::clamp(i0 + 1, 0, n - 1);
      taps[o] = {lo, hi, 1.0 - frac, frac};
    }
  }
  return taps;
}

// x is [n x h*w]; returns [n x (2h)*(2w)].
template <typename T>
Tensor<T> upsample2x_rows(const Tensor<T>& x, int h, int w, Upsample mode) {
  if (x.rank() != 2 || x.cols() != h * w)
    throw ShapeError("upsample2x_rows: cols must equal h*w");
  auto ty = upsample2x_taps(h, mode);
  auto tx = upsample2x_taps(w, mode);
  int ho = 2 * h, wo = 2 * w;
  Tensor<T> y({x.rows(), ho * wo});
  for (int r = 0; r < x.rows(); ++r) {
    const T* in = x.data() + static_cast<std::size_t>(r) * h * w;
    T* out = y.data() + static_cast<std::size_t>(r) * ho * wo;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const auto& ay = ty[oy];
        const auto& ax = tx[ox];
        double v = ay.w0 * (ax.w0 * in[ay.i0 * w + ax.i0] + ax.w1 * in[ay.i0 * w + ax.i1]) +
                   ay.w1 * (ax.w0 * in[ay.i1 * w + ax.i0] + ax.w1 * in[ay.i1 * w + ax.i1]);
        out[oy * wo + ox] = static_cast<T>(v);
      }
  }
  return y;
}

// Transpose of upsample2x_rows: scatters gout [n x 4hw] into gin [n x hw].
template <typename T>
void upsample2x_rows_backward(const Tensor<T>& gout, int h, int w, Upsample mode,
                              Tensor<T>& gin) {
  auto ty = upsample2x_taps(h, mode);
  auto tx = upsample2x_taps(w, mode);
  int ho = 2 * h, wo = 2 * w;
  for (int r = 0; r < gout.rows(); ++r) {
    const T* go = gout.data() + static_cast<std::size_t>(r) * ho * wo;
    T* gi = gin.data() + static_cast<std::size_t>(r) * h * w;
    for (int oy = 0; oy < ho; ++oy)
      for (int ox = 0; ox < wo; ++ox) {
        const auto& ay = ty[oy];
        const auto& ax = tx[ox];
        T g = go[oy * wo + ox];
        gi[ay.i0 * w + ax.i0] += static_cast<T>(ay.w0 * ax.w0) * g;
        gi[ay.i0 * w + ax.i1] += static_cast<T>(ay.w0 * ax.w1) * g;
        gi[ay.i1 * w + ax.i0] += static_cast<T>(ay.w1 * ax.w0) * g;
        gi[ay.i1 * w + ax.i1] += static_cast<T>(ay.w1 * ax.w1) * g;
      }
  }
}

// y += alpha * x
template <typename T>
void axpy(T alpha, const Tensor<T>& x, Tensor<T>& y) {
  require_same_shape(x, y, "axpy");
  const T* xp = x.data();
  T* yp = y.data();
  for (std::size_t i = 0; i < x.numel(); ++i) yp[i] += alpha * xp[i];
}

}  // namespace greskit
