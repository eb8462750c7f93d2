#pragma once

#include <cmath>
#include <string>

#include "greskit/nn.hpp"

namespace greskit {

enum class React { concat_linear, add, cross_attn };

struct SdmOptions {
  int n_heads = 4;
  bool mha_residual = true;
  React react = React::concat_linear;
};

// ---- Multi-head attention (queries from q, keys/values from kv) ----

template <typename T>
void register_mha(ParamStore<T>& store, Rng& rng, const std::string& prefix, int d) {
  register_linear(store, rng, prefix + ".q", d, d, true);
  register_linear(store, rng, prefix + ".k", d, d, true);
  register_linear(store, rng, prefix + ".v", d, d, true);
  register_linear(store, rng, prefix + ".out", d, d, true);
}

template <typename T>
Var<T> mha(ParamCtx<T>& ctx, const std::string& prefix, Var<T> q, Var<T> kv, int n_heads) {
  int d = q.value().cols();
  if (kv.value().cols() != d) throw ShapeError("mha: query/key width mismatch");
  if (n_heads <= 0 || d % n_heads)
    throw ConfigError("mha: head count " + std::to_string(n_heads) + " must divide width " +
                      std::to_string(d));
  Var<T> qp = ctx.linear(prefix + ".q", q);
  Var<T> kp = ctx.linear(prefix + ".k", kv);
  Var<T> vp = ctx.linear(prefix + ".v", kv);
  int dh = d / n_heads;
  T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(dh)));
  Var<T> heads;
  for (int h = 0; h < n_heads; ++h) {
    Var<T> qh = slice_cols(qp, h * dh, dh);
    Var<T> kh = slice_cols(kp, h * dh, dh);
    Var<T> vh = slice_cols(vp, h * dh, dh);
    Var<T> att = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
    Var<T> oh = matmul(att, vh);
    heads = h == 0 ? oh : concat_cols(heads, oh);
  }
  return ctx.linear(prefix + ".out", heads);
}

// ---- Semantic decoding module ----
// One cascade stage: build the language<->vision affinity, derive the
// semantic map S for this pyramid level, and refine the query set with it.

template <typename T>
void register_sdm(ParamStore<T>& store, Rng& rng, const std::string& prefix, int d, int hw,
                  const SdmOptions& opt) {
  register_linear(store, rng, prefix + ".wk_l", d, d, false);
  register_linear(store, rng, prefix + ".wk_v", d, d, false);
  register_linear(store, rng, prefix + ".wv_l", d, d, false);
  register_linear(store, rng, prefix + ".wv_v", d, d, false);
  register_mlp(store, rng, prefix + ".proj_s", {hw, d, d});
  register_mha(store, rng, prefix + ".mha", d);
  if (opt.react == React::concat_linear)
    register_linear(store, rng, prefix + ".react", 2 * d, d, true);
  else if (opt.react == React::cross_attn)
    register_mha(store, rng, prefix + ".react_mha", d);
}

// Scaled bilinear affinity between projected language rows and visual cells:
// A = (L Wk_l)(V Wk_v)^T / sqrt(D), shape [n x hw].
template <typename T>
Var<T> coarse_map(ParamCtx<T>& ctx, const std::string& prefix, Var<T> l, Var<T> v) {
  int d = l.value().cols();
  if (v.value().cols() != d) throw ShapeError("coarse_map: width mismatch");
  Var<T> lk = ctx.linear(prefix + ".wk_l", l);
  Var<T> vk = ctx.linear(prefix + ".wk_v", v);
  return scale(matmul(lk, transpose(vk)),
               T(1) / static_cast<T>(std::sqrt(static_cast<double>(d))));
}

template <typename T>
struct FineMap {
  Var<T> affinity;  // [n x hw]
  Var<T> f_lv;      // language rows mixed from vision values, [n x d]
  Var<T> f_vl;      // vision cells mixed from language values, [hw x d]
  Var<T> semantic;  // S = f_lv f_vl^T, [n x hw]
};

// Bidirectional decomposition of the affinity into a rank-d semantic map.
template <typename T>
FineMap<T> fine_map(ParamCtx<T>& ctx, const std::string& prefix, Var<T> l, Var<T> v) {
  FineMap<T> out;
  out.affinity = coarse_map(ctx, prefix, l, v);
  out.f_lv = matmul(softmax_rows(out.affinity), ctx.linear(prefix + ".wv_v", v));
  out.f_vl = matmul(softmax_rows(transpose(out.affinity)), ctx.linear(prefix + ".wv_l", l));
  out.semantic = matmul(out.f_lv, transpose(out.f_vl));
  return out;
}

// Cross-attends the incoming queries onto semantic queries Q^S = MLP(S),
// then reactivates them with the original language features l_orig.
template <typename T>
Var<T> refine_query(ParamCtx<T>& ctx, const std::string& prefix, Var<T> q, Var<T> semantic,
                    Var<T> l_orig, const SdmOptions& opt) {
  Var<T> q_s = ctx.mlp(prefix + ".proj_s", semantic);
  Var<T> att = mha(ctx, prefix + ".mha", q, q_s, opt.n_heads);
  Var<T> refined = opt.mha_residual ? add(att, q) : att;
  switch (opt.react) {
    case React::concat_linear:
      return ctx.linear(prefix + ".react", concat_cols(refined, l_orig));
    case React::add:
      return add(refined, l_orig);
    case React::cross_attn:
      return add(refined, mha(ctx, prefix + ".react_mha", refined, l_orig, opt.n_heads));
  }
  throw ConfigError("refine_query: unknown reactivation mode");
}

template <typename T>
struct SdmOut {
  Var<T> semantic;  // [n x hw] map handed to aggregation
  Var<T> query;     // [n x d] refined queries handed to the next stage
};

template <typename T>
SdmOut<T> run_level(ParamCtx<T>& ctx, const std::string& prefix, Var<T> q_in, Var<T> v_level,
                    Var<T> l_orig, const SdmOptions& opt) {
  FineMap<T> fm = fine_map(ctx, prefix, q_in, v_level);
  return {fm.semantic, refine_query(ctx, prefix, q_in, fm.semantic, l_orig, opt)};
}

}  // namespace greskit
