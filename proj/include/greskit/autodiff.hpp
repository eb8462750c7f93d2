#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "greskit/ops.hpp"

namespace greskit {

template <typename T>
class Tape;

// Handle into a tape node. Cheap to copy; values/grads live on the tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  int id = -1;

  const Tensor<T>& value() const { return tape->value(id); }
  const Tensor<T>& grad() const { return tape->grad(id); }
};

// Reverse-mode tape over whole-tensor ops. Nodes are stored in creation
// order, which is already topological; backward() walks them in reverse and
// calls each node's recorded pullback with the node's accumulated gradient.
// Subtrees with no differentiable leaves are pruned via needs_grad.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

  Var<T> leaf(Tensor<T> value, bool needs_grad = false) {
    return push(std::move(value), needs_grad, nullptr);
  }
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  Var<T> push(Tensor<T> value, bool needs_grad, BackwardFn bw) {
    value.maybe_check_finite();
    nodes_.push_back(Node{std::move(value), Tensor<T>(), needs_grad,
                          needs_grad ? std::move(bw) : BackwardFn()});
    nodes_.back().grad = Tensor<T>(nodes_.back().value.shape());
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<T>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  Tensor<T>& grad(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds d(root)/d(root) = 1 and propagates to every differentiable leaf.
  void backward(Var<T> root) {
    if (root.tape != this) throw ShapeError("backward: root from another tape");
    auto& r = nodes_[static_cast<std::size_t>(root.id)];
    if (r.value.numel() != 1) throw ShapeError("backward: root must be scalar");
    if (!r.needs_grad) return;
    r.grad[0] = T(1);
    for (int i = root.id; i >= 0; --i) {
      auto& n = nodes_[static_cast<std::size_t>(i)];
      if (n.needs_grad && n.backward) n.backward(*this, n.grad);
    }
  }

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool needs_grad;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

namespace detail {
template <typename T>
Tape<T>& same_tape(Var<T> a, Var<T> b) {
  if (a.tape == nullptr || a.tape != b.tape) throw ShapeError("vars from different tapes");
  return *a.tape;
}
}  // namespace detail

// ---- Arithmetic ----

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  auto& t = detail::same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor<T> out = a.value();
  axpy(T(1), b.value(), out);
  int ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi),
                [ai, bi](Tape<T>& tp, const Tensor<T>& g) {
                  if (tp.needs_grad(ai)) axpy(T(1), g, tp.grad(ai));
                  if (tp.needs_grad(bi)) axpy(T(1), g, tp.grad(bi));
                });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  auto& t = detail::same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor<T> out = a.value();
  axpy(T(-1), b.value(), out);
  int ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi),
                [ai, bi](Tape<T>& tp, const Tensor<T>& g) {
                  if (tp.needs_grad(ai)) axpy(T(1), g, tp.grad(ai));
                  if (tp.needs_grad(bi)) axpy(T(-1), g, tp.grad(bi));
                });
}

// Elementwise product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  auto& t = detail::same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
  int ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi),
                [ai, bi](Tape<T>& tp, const Tensor<T>& g) {
                  if (tp.needs_grad(ai)) {
                    auto& ga = tp.grad(ai);
                    const auto& vb = tp.value(bi);
                    for (std::size_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * vb[i];
                  }
                  if (tp.needs_grad(bi)) {
                    auto& gb = tp.grad(bi);
                    const auto& va = tp.value(ai);
                    for (std::size_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * va[i];
                  }
                });
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
  auto& t = *a.tape;
  Tensor<T> out = a.value();
  for (auto& v : out.vec()) v *= c;
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai),
                [ai, c](Tape<T>& tp, const Tensor<T>& g) { axpy(c, g, tp.grad(ai)); });
}

// Multiply x by a one-element tensor s (e.g. a selection weight).
template <typename T>
Var<T> mul_scalar(Var<T> x, Var<T> s) {
  auto& t = detail::same_tape(x, s);
  if (s.value().numel() != 1) throw ShapeError("mul_scalar: scalar operand must have one element");
  T sv = s.value()[0];
  Tensor<T> out = x.value();
  for (auto& v : out.vec()) v *= sv;
  int xi = x.id, si = s.id;
  return t.push(std::move(out), t.needs_grad(xi) || t.needs_grad(si),
                [xi, si, sv](Tape<T>& tp, const Tensor<T>& g) {
                  if (tp.needs_grad(xi)) axpy(sv, g, tp.grad(xi));
                  if (tp.needs_grad(si)) {
                    const auto& vx = tp.value(xi);
                    T acc = T(0);
                    for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i] * vx[i];
                    tp.grad(si)[0] += acc;
                  }
                });
}

// Scales row i of x by s[i]; s is [m x 1].
template <typename T>
Var<T> scale_rows(Var<T> x, Var<T> s) {
  auto& t = detail::same_tape(x, s);
  const auto& vx = x.value();
  const auto& vs = s.value();
  if (vs.rank() != 2 || vs.cols() != 1 || vs.rows() != vx.rows())
    throw ShapeError("scale_rows: scale must be [rows x 1]");
  Tensor<T> out = vx;
  for (int i = 0; i < vx.rows(); ++i)
    for (int j = 0; j < vx.cols(); ++j) out.at(i, j) *= vs.at(i, 0);
  int xi = x.id, si = s.id;
  return t.push(std::move(out), t.needs_grad(xi) || t.needs_grad(si),
                [xi, si](Tape<T>& tp, const Tensor<T>& g) {
                  const auto& vx2 = tp.value(xi);
                  const auto& vs2 = tp.value(si);
                  if (tp.needs_grad(xi)) {
                    auto& gx = tp.grad(xi);
                    for (int i = 0; i < g.rows(); ++i)
                      for (int j = 0; j < g.cols(); ++j) gx.at(i, j) += g.at(i, j) * vs2.at(i, 0);
                  }
                  if (tp.needs_grad(si)) {
                    auto& gs = tp.grad(si);
                    for (int i = 0; i < g.rows(); ++i) {
                      T acc = T(0);
                      for (int j = 0; j < g.cols(); ++j) acc += g.at(i, j) * vx2.at(i, j);
                      gs.at(i, 0) += acc;
                    }
                  }
                });
}

// ---- Linear algebra ----

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  auto& t = detail::same_tape(a, b);
  Tensor<T> out = matmul(a.value(), b.value());
  int ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi),
                [ai, bi](Tape<T>& tp, const Tensor<T>& g) {
                  const auto& va = tp.value(ai);
                  const auto& vb = tp.value(bi);
                  int m = va.rows(), k = va.cols(), n = vb.cols();
                  if (tp.needs_grad(ai))
                    gemm_nt_acc(g.data(), vb.data(), tp.grad(ai).data(), m, n, k);
                  if (tp.needs_grad(bi))
                    gemm_tn_acc(va.data(), g.data(), tp.grad(bi).data(), k, m, n);
                });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  auto& t = *a.tape;
  Tensor<T> out = transpose(a.value());
  int ai = a.id;
  return t.push(std::move(out), t.needs_grad(ai), [ai](Tape<T>& tp, const Tensor<T>& g) {
    axpy(T(1), transpose(g), tp.grad(ai));
  });
}

// Adds rank-1 bias b[n] to every row of x[m x n].
template <typename T>
Var<T> add_row_bias(Var<T> x, Var<T> b) {
  auto& t = detail::same_tape(x, b);
  const auto& vx = x.value();
  const auto& vb = b.value();
  if (vb.rank() != 1 || vb.dim(0) != vx.cols())
    throw ShapeError("add_row_bias: bias must be rank-1 of width cols");
  Tensor<T> out = vx;
  for (int i = 0; i < vx.rows(); ++i)
    for (int j = 0; j < vx.cols(); ++j) out.at(i, j) += vb[static_cast<std::size_t>(j)];
  int xi = x.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(xi) || t.needs_grad(bi),
                [xi, bi](Tape<T>& tp, const Tensor<T>& g) {
                  if (tp.needs_grad(xi)) axpy(T(1), g, tp.grad(xi));
                  if (tp.needs_grad(bi)) {
                    auto& gb = tp.grad(bi);
                    for (int i = 0; i < g.rows(); ++i)
                      for (int j = 0; j < g.cols(); ++j) gb[static_cast<std::size_t>(j)] += g.at(i, j);
                  }
                });
}

// ---- Nonlinearities ----

template <typename T>
Var<T> sigmoid(Var<T> x) {
  auto& t = *x.tape;
  Tensor<T> out = sigmoid(x.value());
  int xi = x.id;
  Tensor<T> saved = out;
  return t.push(std::move(out), t.needs_grad(xi),
                [xi, saved = std::move(saved)](Tape<T>& tp, const Tensor<T>& g) {
                  auto& gx = tp.grad(xi);
                  for (std::size_t i = 0; i < g.numel(); ++i)
                    gx[i] += g[i] * saved[i] * (T(1) - saved[i]);
                });
}

template <typename T>
Var<T> relu(Var<T> x) {
  auto& t = *x.tape;
  Tensor<T> out = relu(x.value());
  int xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi), [xi](Tape<T>& tp, const Tensor<T>& g) {
    auto& gx = tp.grad(xi);
    const auto& vx = tp.value(xi);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (vx[i] > T(0)) gx[i] += g[i];
  });
}

template <typename T>
Var<T> gelu(Var<T> x) {
  auto& t = *x.tape;
  Tensor<T> out = gelu(x.value());
  int xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi), [xi](Tape<T>& tp, const Tensor<T>& g) {
    auto& gx = tp.grad(xi);
    const auto& vx = tp.value(xi);
    const T inv_sqrt2 = T(1) / std::sqrt(T(2));
    const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * T(M_PI));
    for (std::size_t i = 0; i < g.numel(); ++i) {
      T v = vx[i];
      T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      gx[i] += g[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Var<T> softmax_rows(Var<T> x) {
  auto& t = *x.tape;
  Tensor<T> out = softmax_rows(x.value());
  int xi = x.id;
  Tensor<T> saved = out;
  return t.push(std::move(out), t.needs_grad(xi),
                [xi, saved = std::move(saved)](Tape<T>& tp, const Tensor<T>& g) {
                  auto& gx = tp.grad(xi);
                  for (int i = 0; i < g.rows(); ++i) {
                    T dot = T(0);
                    for (int j = 0; j < g.cols(); ++j) dot += g.at(i, j) * saved.at(i, j);
                    for (int j = 0; j < g.cols(); ++j)
                      gx.at(i, j) += saved.at(i, j) * (g.at(i, j) - dot);
                  }
                });
}

// ---- Reductions / reshaping ----

template <typename T>
Var<T> sum_all(Var<T> x) {
  auto& t = *x.tape;
  T acc = T(0);
  for (std::size_t i = 0; i < x.value().numel(); ++i) acc += x.value()[i];
  int xi = x.id;
  return t.push(Tensor<T>({1}, {acc}), t.needs_grad(xi),
                [xi](Tape<T>& tp, const Tensor<T>& g) {
                  auto& gx = tp.grad(xi);
                  for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g[0];
                });
}

template <typename T>
Var<T> mean_all(Var<T> x) {
  return scale(sum_all(x), T(1) / static_cast<T>(x.value().numel()));
}

// Column means: [m x n] -> [1 x n].
template <typename T>
Var<T> mean_rows(Var<T> x) {
  auto& t = *x.tape;
  const auto& vx = x.value();
  int m = vx.rows(), n = vx.cols();
  Tensor<T> out({1, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(0, j) += vx.at(i, j);
  for (int j = 0; j < n; ++j) out.at(0, j) /= static_cast<T>(m);
  int xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi), [xi, m](Tape<T>& tp, const Tensor<T>& g) {
    auto& gx = tp.grad(xi);
    T inv = T(1) / static_cast<T>(m);
    for (int i = 0; i < gx.rows(); ++i)
      for (int j = 0; j < gx.cols(); ++j) gx.at(i, j) += g.at(0, j) * inv;
  });
}

// Column sums: [m x n] -> [1 x n].
template <typename T>
Var<T> sum_rows(Var<T> x) {
  auto& t = *x.tape;
  const auto& vx = x.value();
  int m = vx.rows(), n = vx.cols();
  Tensor<T> out({1, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(0, j) += vx.at(i, j);
  int xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi), [xi](Tape<T>& tp, const Tensor<T>& g) {
    auto& gx = tp.grad(xi);
    for (int i = 0; i < gx.rows(); ++i)
      for (int j = 0; j < gx.cols(); ++j) gx.at(i, j) += g.at(0, j);
  });
}

// Row means: [m x n] -> [m x 1].
template <typename T>
Var<T> mean_cols(Var<T> x) {
  auto& t = *x.tape;
  const auto& vx = x.value();
  int m = vx.rows(), n = vx.cols();
  Tensor<T> out({m, 1});
  for (int i = 0; i < m; ++i) {
    T acc = T(0);
    for (int j = 0; j < n; ++j) acc += vx.at(i, j);
    out.at(i, 0) = acc / static_cast<T>(n);
  }
  int xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi), [xi, n](Tape<T>& tp, const Tensor<T>& g) {
    auto& gx = tp.grad(xi);
    T inv = T(1) / static_cast<T>(n);
    for (int i = 0; i < gx.rows(); ++i)
      for (int j = 0; j < gx.cols(); ++j) gx.at(i, j) += g.at(i, 0) * inv;
  });
}

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  auto& t = detail::same_tape(a, b);
  const auto& va = a.value();
  const auto& vb = b.value();
  if (va.rank() != 2 || vb.rank() != 2 || va.rows() != vb.rows())
    throw ShapeError("concat_cols: row mismatch");
  int m = va.rows(), na = va.cols(), nb = vb.cols();
  Tensor<T> out({m, na + nb});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < na; ++j) out.at(i, j) = va.at(i, j);
    for (int j = 0; j < nb; ++j) out.at(i, na + j) = vb.at(i, j);
  }
  int ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi),
                [ai, bi, na, nb](Tape<T>& tp, const Tensor<T>& g) {
                  if (tp.needs_grad(ai)) {
                    auto& ga = tp.grad(ai);
                    for (int i = 0; i < g.rows(); ++i)
                      for (int j = 0; j < na; ++j) ga.at(i, j) += g.at(i, j);
                  }
                  if (tp.needs_grad(bi)) {
                    auto& gb = tp.grad(bi);
                    for (int i = 0; i < g.rows(); ++i)
                      for (int j = 0; j < nb; ++j) gb.at(i, j) += g.at(i, na + j);
                  }
                });
}

template <typename T>
Var<T> concat_rows(Var<T> a, Var<T> b) {
  auto& t = detail::same_tape(a, b);
  const auto& va = a.value();
  const auto& vb = b.value();
  if (va.rank() != 2 || vb.rank() != 2 || va.cols() != vb.cols())
    throw ShapeError("concat_rows: col mismatch");
  int ma = va.rows(), mb = vb.rows(), n = va.cols();
  Tensor<T> out({ma + mb, n});
  for (int i = 0; i < ma; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = va.at(i, j);
  for (int i = 0; i < mb; ++i)
    for (int j = 0; j < n; ++j) out.at(ma + i, j) = vb.at(i, j);
  int ai = a.id, bi = b.id;
  return t.push(std::move(out), t.needs_grad(ai) || t.needs_grad(bi),
                [ai, bi, ma, mb, n](Tape<T>& tp, const Tensor<T>& g) {
                  if (tp.needs_grad(ai)) {
                    auto& ga = tp.grad(ai);
                    for (int i = 0; i < ma; ++i)
                      for (int j = 0; j < n; ++j) ga.at(i, j) += g.at(i, j);
                  }
                  if (tp.needs_grad(bi)) {
                    auto& gb = tp.grad(bi);
                    for (int i = 0; i < mb; ++i)
                      for (int j = 0; j < n; ++j) gb.at(i, j) += g.at(ma + i, j);
                  }
                });
}

template <typename T>
Var<T> slice_cols(Var<T> x, int c0, int len) {
  auto& t = *x.tape;
  const auto& vx = x.value();
  if (vx.rank() != 2 || c0 < 0 || len <= 0 || c0 + len > vx.cols())
    throw ShapeError("slice_cols: bad range");
  int m = vx.rows();
  Tensor<T> out({m, len});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < len; ++j) out.at(i, j) = vx.at(i, c0 + j);
  int xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi),
                [xi, c0, len](Tape<T>& tp, const Tensor<T>& g) {
                  auto& gx = tp.grad(xi);
                  for (int i = 0; i < g.rows(); ++i)
                    for (int j = 0; j < len; ++j) gx.at(i, c0 + j) += g.at(i, j);
                });
}

template <typename T>
Var<T> reshape(Var<T> x, std::vector<int> shape) {
  auto& t = *x.tape;
  Tensor<T> out(shape, x.value().vec());
  int xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi), [xi](Tape<T>& tp, const Tensor<T>& g) {
    auto& gx = tp.grad(xi);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
}

// Identity forward, zero pullback: severs the graph.
template <typename T>
Var<T> stop_gradient(Var<T> x) {
  return x.tape->constant(x.value());
}

// ---- Table lookup ----

// Gathers rows of table for each id; pullback scatter-adds into the table.
template <typename T>
Var<T> embedding(Var<T> table, const std::vector<int>& ids) {
  auto& t = *table.tape;
  const auto& vt = table.value();
  if (vt.rank() != 2) throw ShapeError("embedding: table must be rank-2");
  int v = vt.rows(), d = vt.cols();
  for (int id : ids)
    if (id < 0 || id >= v)
      throw VocabError("embedding: id " + std::to_string(id) + " outside table of " +
                       std::to_string(v));
  Tensor<T> out({static_cast<int>(ids.size()), d});
  for (std::size_t i = 0; i < ids.size(); ++i)
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = vt.at(ids[i], j);
  int ti = table.id;
  return t.push(std::move(out), t.needs_grad(ti),
                [ti, ids, d](Tape<T>& tp, const Tensor<T>& g) {
                  auto& gt = tp.grad(ti);
                  for (std::size_t i = 0; i < ids.size(); ++i)
                    for (int j = 0; j < d; ++j) gt.at(ids[i], j) += g.at(static_cast<int>(i), j);
                });
}

// ---- Spatial ----

template <typename T>
Var<T> avg_pool_cells(Var<T> x, int h, int w, int stride) {
  auto& t = *x.tape;
  Tensor<T> out = avg_pool_cells(x.value(), h, w, stride);
  int xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi),
                [xi, h, w, stride](Tape<T>& tp, const Tensor<T>& g) {
                  auto& gx = tp.grad(xi);
                  int wo = w / stride, d = gx.cols();
                  T inv = T(1) / static_cast<T>(stride * stride);
                  for (int yy = 0; yy < h / stride; ++yy)
                    for (int xx = 0; xx < wo; ++xx) {
                      const T* go = g.data() + static_cast<std::size_t>(yy * wo + xx) * d;
                      for (int dy = 0; dy < stride; ++dy)
                        for (int dx = 0; dx < stride; ++dx) {
                          T* gi = gx.data() +
                                  static_cast<std::size_t>((yy * stride + dy) * w + xx * stride + dx) * d;
                          for (int c = 0; c < d; ++c) gi[c] += go[c] * inv;
                        }
                    }
                });
}

template <typename T>
Var<T> upsample2x_rows(Var<T> x, int h, int w, Upsample mode) {
  auto& t = *x.tape;
  Tensor<T> out = upsample2x_rows(x.value(), h, w, mode);
  int xi = x.id;
  return t.push(std::move(out), t.needs_grad(xi),
                [xi, h, w, mode](Tape<T>& tp, const Tensor<T>& g) {
                  upsample2x_rows_backward(g, h, w, mode, tp.grad(xi));
                });
}

// ---- Loss kernels ----

// Mean softmax cross-entropy against fixed per-row target distributions.
template <typename T>
Var<T> softmax_xent_mean(Var<T> logits, const Tensor<T>& target) {
  auto& t = *logits.tape;
  const auto& vx = logits.value();
  require_same_shape(vx, target, "softmax_xent_mean");
  int m = vx.rows(), k = vx.cols();
  Tensor<T> probs = softmax_rows(vx);
  T loss = T(0);
  for (int i = 0; i < m; ++i) {
    T mx = vx.at(i, 0);
    for (int j = 1; j < k; ++j) mx = std::max(mx, vx.at(i, j));
    T lse = T(0);
    for (int j = 0; j < k; ++j) lse += std::exp(vx.at(i, j) - mx);
    lse = mx + std::log(lse);
    for (int j = 0; j < k; ++j) loss += target.at(i, j) * (lse - vx.at(i, j));
  }
  loss /= static_cast<T>(m);
  int xi = logits.id;
  return t.push(Tensor<T>({1}, {loss}), t.needs_grad(xi),
                [xi, probs = std::move(probs), target, m](Tape<T>& tp, const Tensor<T>& g) {
                  auto& gx = tp.grad(xi);
                  T s = g[0] / static_cast<T>(m);
                  for (int i = 0; i < probs.rows(); ++i)
                    for (int j = 0; j < probs.cols(); ++j)
                      gx.at(i, j) += s * (probs.at(i, j) - target.at(i, j));
                });
}

// Mean elementwise smooth-L1 against a fixed target:
// 0.5 d^2 for |d| < 1, |d| - 0.5 otherwise.
template <typename T>
Var<T> smooth_l1_mean(Var<T> pred, const Tensor<T>& target) {
  auto& t = *pred.tape;
  const auto& vp = pred.value();
  require_same_shape(vp, target, "smooth_l1_mean");
  T loss = T(0);
  for (std::size_t i = 0; i < vp.numel(); ++i) {
    T d = vp[i] - target[i];
    T a = std::abs(d);
    loss += a < T(1) ? T(0.5) * d * d : a - T(0.5);
  }
  loss /= static_cast<T>(vp.numel());
  int xi = pred.id;
  std::size_t n = vp.numel();
  return t.push(Tensor<T>({1}, {loss}), t.needs_grad(xi),
                [xi, target, n](Tape<T>& tp, const Tensor<T>& g) {
                  auto& gx = tp.grad(xi);
                  const auto& vp2 = tp.value(xi);
                  T s = g[0] / static_cast<T>(n);
                  for (std::size_t i = 0; i < n; ++i) {
                    T d = vp2[i] - target[i];
                    gx[i] += s * std::clamp(d, T(-1), T(1));
                  }
                });
}

// ---- Numerical gradient oracle ----

// Central differences of a scalar-valued function of one tensor.
template <typename T, typename F>
Tensor<T> finite_diff_grad(F&& f, const Tensor<T>& x, T h) {
  Tensor<T> g(x.shape());
  Tensor<T> p = x;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    T keep = p[i];
    p[i] = keep + h;
    T up = f(p);
    p[i] = keep - h;
    T dn = f(p);
    p[i] = keep;
    if (!std::isfinite(static_cast<double>(up)) || !std::isfinite(static_cast<double>(dn)))
      throw NumericError("finite_diff_grad: non-finite probe value");
    g[i] = (up - dn) / (T(2) * h);
  }
  return g;
}

}  // namespace greskit
