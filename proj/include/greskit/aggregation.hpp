#pragma once

#include <optional>
#include <string>
#include <vector>

#include "greskit/encoders.hpp"
#include "greskit/nn.hpp"

namespace greskit {

enum class MaskKernel { pooled, per_token };

struct DhaOptions {
  Upsample mode = Upsample::bilinear;
  MaskKernel kernel = MaskKernel::pooled;
  bool intra_off = false;
  bool inter_off = false;
  // Test hook: fixes the per-level selection weights instead of computing
  // them from the queries.
  std::optional<std::vector<double>> alpha_override;
};

// One cascade stage's contribution: its semantic map, the query set that
// produced it, and the map's spatial extent.
template <typename T>
struct LevelBundle {
  Var<T> map;    // [n x h*w]
  Var<T> query;  // [n x d]
  LevelDims dims;
};

template <typename T>
void register_dha(ParamStore<T>& store, Rng& rng, int d, int n_tokens, int n_levels,
                  int reduction_ratio, MaskKernel kernel) {
  if (reduction_ratio <= 0) throw ConfigError("register_dha: reduction_ratio must be positive");
  register_linear(store, rng, "dha.gate", d, 1, true);
  int hidden = std::max(1, (n_tokens + reduction_ratio - 1) / reduction_ratio);
  for (int i = 0; i < n_levels; ++i) {
    std::string p = "dha.intra." + std::to_string(i);
    register_linear(store, rng, p + ".fc1", n_tokens, hidden, true);
    register_linear(store, rng, p + ".fc2", hidden, n_tokens, true);
  }
  if (kernel == MaskKernel::pooled)
    register_mlp(store, rng, "dha.kernel", {d, d, 2 * n_tokens});
  else
    register_mlp(store, rng, "dha.kernel", {d, d, 2});
}

// Inter-level selection: one sigmoid gate per level computed from the
// mean-pooled query set of that level's stage.
template <typename T>
Var<T> inter_select(ParamCtx<T>& ctx, Var<T> query) {
  return sigmoid(ctx.linear("dha.gate", mean_rows(query)));  // [1 x 1]
}

// Intra-level selection: squeeze-excitation over the token channel. Each
// token map row is scaled by a weight derived from its spatial mean.
template <typename T>
Var<T> intra_select(ParamCtx<T>& ctx, const std::string& prefix, Var<T> map) {
  Var<T> pooled = transpose(mean_cols(map));  // [1 x n]
  Var<T> w = sigmoid(ctx.linear(prefix + ".fc2", relu(ctx.linear(prefix + ".fc1", pooled))));
  return scale_rows(map, transpose(w));
}

// Pure coarse-to-fine accumulation: m*_1 = a_1 m_1;
// m*_{i+1} = up(m*_i) + a_{i+1} m_{i+1}. Dims may repeat (ratio 1) or
// double (ratio 2) between consecutive levels.
template <typename T>
Var<T> aggregate_maps(const std::vector<Var<T>>& maps, const std::vector<Var<T>>& alphas,
                      const std::vector<LevelDims>& dims, Upsample mode) {
  if (maps.empty() || maps.size() != alphas.size() || maps.size() != dims.size())
    throw ShapeError("aggregate_maps: level list mismatch");
  Var<T> acc = mul_scalar(maps[0], alphas[0]);
  LevelDims cur = dims[0];
  for (std::size_t i = 1; i < maps.size(); ++i) {
    if (dims[i].h == 2 * cur.h && dims[i].w == 2 * cur.w) {
      acc = upsample2x_rows(acc, cur.h, cur.w, mode);
      cur = dims[i];
    } else if (dims[i].h != cur.h || dims[i].w != cur.w) {
      throw ShapeError("aggregate_maps: level extents must repeat or double");
    }
    acc = add(acc, mul_scalar(maps[i], alphas[i]));
  }
  return acc;
}

template <typename T>
struct AggOut {
  Var<T> m_star;              // [n x h*w] at the finest contributing level
  std::vector<Var<T>> alphas;  // per-level [1 x 1] selection weights
  std::vector<Var<T>> gates;   // per-level [1 x n] token weights (empty rows when intra off)
  LevelDims dims;
};

template <typename T>
AggOut<T> aggregate(ParamCtx<T>& ctx, const std::vector<LevelBundle<T>>& bundles,
                    const DhaOptions& opt) {
  if (bundles.empty()) throw ShapeError("aggregate: no levels");
  int n = bundles[0].map.value().rows();
  for (const auto& b : bundles) {
    if (b.map.value().rows() != n) throw ShapeError("aggregate: token count differs across levels");
    if (b.map.value().cols() != b.dims.h * b.dims.w)
      throw ShapeError("aggregate: map extent does not match dims");
  }
  if (opt.alpha_override && opt.alpha_override->size() != bundles.size())
    throw ShapeError("aggregate: alpha override length mismatch");

  AggOut<T> out;
  auto& tape = ctx.tape();
  std::vector<Var<T>> maps;
  for (std::size_t i = 0; i < bundles.size(); ++i) {
    Var<T> m = bundles[i].map;
    if (!opt.intra_off) {
      Var<T> pooled = transpose(mean_cols(m));
      Var<T> w = sigmoid(ctx.linear("dha.intra." + std::to_string(i) + ".fc2",
                                    relu(ctx.linear("dha.intra." + std::to_string(i) + ".fc1",
                                                    pooled))));
      out.gates.push_back(w);
      m = scale_rows(m, transpose(w));
    }
    maps.push_back(m);

    Var<T> alpha;
    if (opt.alpha_override)
      alpha = tape.constant(Tensor<T>({1, 1}, {static_cast<T>((*opt.alpha_override)[i])}));
    else if (opt.inter_off)
      alpha = tape.constant(Tensor<T>::full({1, 1}, T(1)));
    else
      alpha = inter_select(ctx, bundles[i].query);
    out.alphas.push_back(alpha);
  }

  std::vector<LevelDims> dims;
  for (const auto& b : bundles) dims.push_back(b.dims);
  out.m_star = aggregate_maps(maps, out.alphas, dims, opt.mode);
  out.dims = dims.back();
  return out;
}

// Projects the aggregated token maps to 2-channel mask logits with a kernel
// derived from the final query set, then upsamples to the full grid.
template <typename T>
Var<T> decode_mask(ParamCtx<T>& ctx, Var<T> m_star, Var<T> q_last, LevelDims dims, int out_h,
                   int out_w, const DhaOptions& opt) {
  int n = m_star.value().rows();
  if (q_last.value().rows() != n) throw ShapeError("decode_mask: query/map token mismatch");
  if (m_star.value().cols() != dims.h * dims.w)
    throw ShapeError("decode_mask: map extent does not match dims");

  Var<T> kernel;
  if (opt.kernel == MaskKernel::pooled)
    kernel = reshape(ctx.mlp("dha.kernel", mean_rows(q_last)), {n, 2});
  else
    kernel = ctx.mlp("dha.kernel", q_last);  // [n x 2]

  Var<T> logits = matmul(transpose(m_star), kernel);  // [h*w x 2]

  int h = dims.h, w = dims.w;
  while (h < out_h || w < out_w) {
    if (out_h % h || out_w % w || (out_h / h) != (out_w / w))
      throw ConfigError("decode_mask: output extent must be a power-of-two multiple of the map");
    logits = transpose(upsample2x_rows(transpose(logits), h, w, opt.mode));
    h *= 2;
    w *= 2;
  }
  if (h != out_h || w != out_w) throw ConfigError("decode_mask: cannot reach output extent");
  return logits;  // [out_h*out_w x 2]
}

}  // namespace greskit
