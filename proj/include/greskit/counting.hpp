#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "greskit/nn.hpp"

namespace greskit {

enum class TokenReduce { sum, mean };

// Registers the counting branch: one count head per cascade stage and the
// existence classifier reading the (detached) pooled count vector. The
// existence head is a single affine map so that a zero count vector yields
// exactly its bias.
template <typename T>
void register_aoc(ParamStore<T>& store, Rng& rng, int d, int categories, int n_levels) {
  for (int i = 0; i < n_levels; ++i)
    register_mlp(store, rng, "aoc.count." + std::to_string(i), {d, d, categories});
  register_linear(store, rng, "aoc.exist", categories, 2, true);
}

// Existence-only variant: the classifier reads mean-pooled queries instead
// of count predictions (the setup the counting branch is compared against).
template <typename T>
void register_exist_on_queries(ParamStore<T>& store, Rng& rng, int d) {
  register_linear(store, rng, "aoc.exist", d, 2, true);
}

template <typename T>
struct CountPrediction {
  std::vector<Var<T>> per_level;  // C_i, [n x C] per cascade stage
  Var<T> fused;                   // C_all = mean of C_i, [n x C]
  Var<T> pred;                    // C^pred, [1 x C] after token reduction
  Var<T> exist_logits;            // P^pred, [1 x 2], index 1 = "target present"
};

// Per-stage counting vectors fused by averaging, reduced over the token
// axis, with the existence head on a gradient-stopped copy so existence
// supervision cannot reach the main network.
template <typename T>
CountPrediction<T> count_forward(ParamCtx<T>& ctx, const std::vector<Var<T>>& queries,
                                 TokenReduce reduce, bool detach_exist = true) {
  if (queries.empty()) throw ShapeError("count_forward: no query sets");
  int n = queries[0].value().rows();
  CountPrediction<T> out;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    if (queries[i].value().rows() != n)
      throw ShapeError("count_forward: token count differs across stages");
    out.per_level.push_back(ctx.mlp("aoc.count." + std::to_string(i), queries[i]));
  }
  Var<T> acc = out.per_level[0];
  for (std::size_t i = 1; i < out.per_level.size(); ++i) acc = add(acc, out.per_level[i]);
  out.fused = scale(acc, T(1) / static_cast<T>(out.per_level.size()));
  out.pred = reduce == TokenReduce::sum ? sum_rows(out.fused) : mean_rows(out.fused);
  out.pred.value().maybe_check_finite();
  Var<T> exist_in = detach_exist ? stop_gradient(out.pred) : out.pred;
  out.exist_logits = ctx.linear("aoc.exist", exist_in);
  return out;
}

template <typename T>
Var<T> exist_from_queries(ParamCtx<T>& ctx, Var<T> q_last) {
  return ctx.linear("aoc.exist", mean_rows(q_last));
}

// Smooth-L1 count regression against exact per-category referred counts,
// averaged over categories.
template <typename T>
Var<T> count_loss(ParamCtx<T>& ctx, Var<T> c_pred, const std::vector<int>& gt_counts) {
  const auto& v = c_pred.value();
  if (v.rank() != 2 || v.rows() != 1 || v.cols() != static_cast<int>(gt_counts.size()))
    throw ShapeError("count_loss: prediction/target width mismatch");
  Tensor<T> target({1, static_cast<int>(gt_counts.size())});
  for (std::size_t i = 0; i < gt_counts.size(); ++i) {
    if (gt_counts[i] < 0) throw InputError("count_loss: negative ground-truth count");
    target[i] = static_cast<T>(gt_counts[i]);
  }
  (void)ctx;
  return smooth_l1_mean(c_pred, target);
}

// Two-class cross-entropy on the existence logits; gt_exist in {0,1}.
template <typename T>
Var<T> existence_loss(ParamCtx<T>& ctx, Var<T> exist_logits, int gt_exist) {
  if (gt_exist != 0 && gt_exist != 1) throw InputError("existence_loss: flag must be 0/1");
  const auto& v = exist_logits.value();
  if (v.rank() != 2 || v.rows() != 1 || v.cols() != 2)
    throw ShapeError("existence_loss: logits must be [1 x 2]");
  Tensor<T> onehot({1, 2});
  onehot.at(0, gt_exist) = T(1);
  (void)ctx;
  return softmax_xent_mean(exist_logits, onehot);
}

// Fraction of samples whose per-category predictions, rounded half away
// from zero, all equal the ground-truth counts.
inline double c_acc(const std::vector<std::vector<double>>& pred,
                    const std::vector<std::vector<int>>& gt) {
  if (pred.size() != gt.size()) throw ShapeError("c_acc: sample count mismatch");
  if (pred.empty()) throw UndefinedError("c_acc: no samples");
  long long hits = 0;
  for (std::size_t s = 0; s < pred.size(); ++s) {
    if (pred[s].size() != gt[s].size()) throw ShapeError("c_acc: category count mismatch");
    bool all = true;
    for (std::size_t c = 0; c < pred[s].size(); ++c)
      if (static_cast<long long>(std::llround(pred[s][c])) != gt[s][c]) {
        all = false;
        break;
      }
    hits += all;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace greskit
