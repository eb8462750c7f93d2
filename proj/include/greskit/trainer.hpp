#pragma once

#include <cinttypes>
#include <cstdio>
#include <numeric>
#include <string>
#include <vector>

#include "greskit/checkpoint.hpp"
#include "greskit/optimizer.hpp"

namespace greskit {

struct TrainLogEntry {
  int step = 0;
  double loss = 0, mask_l = 0, count_l = 0, exist_l = 0, lr = 0;
};

inline std::string format_log_line(const TrainLogEntry& e) {
  char buf[320];
  std::snprintf(buf, sizeof(buf),
                "{\"step\": %d, \"loss\": %.17g, \"mask_l\": %.17g, \"count_l\": %.17g, "
                "\"exist_l\": %.17g, \"lr\": %.8f}",
                e.step, e.loss, e.mask_l, e.count_l, e.exist_l, e.lr);
  return buf;
}

struct TrainResult {
  ParamStore<double> params;
  std::vector<TrainLogEntry> log;
};

inline void check_dataset_model(const ModelConfig& mcfg, const Dataset& ds) {
  if (ds.samples.empty()) throw InputError("train: dataset has no samples");
  if (ds.meta.categories != mcfg.categories)
    throw ConfigError("train: dataset/model category-count mismatch");
  if (ds.meta.grid_h != mcfg.grid_h || ds.meta.grid_w != mcfg.grid_w)
    throw ConfigError("train: dataset/model grid mismatch");
}

// One optimization step over a fixed batch; returns averaged loss components.
inline TrainLogEntry train_step(ParamStore<double>& store, AdamW& opt, const ModelConfig& mcfg,
                                const LossWeights& lw, const Dataset& ds,
                                const std::vector<int>& batch, double lr, int step) {
  Tape<double> tape;
  ParamCtx<double> ctx(tape, store);
  Var<double> total, mask_t, count_t, exist_t;
  bool first = true;
  for (int idx : batch) {
    const GresSample& s = ds.samples[static_cast<std::size_t>(idx)];
    ForwardOut<double> fo = model_forward(ctx, mcfg, s.grid, s.tokens);
    SampleLoss<double> sl = compute_losses(ctx, mcfg, lw, fo, s.gt_mask, s.gt_counts, s.gt_exist);
    if (first) {
      total = sl.total;
      mask_t = sl.mask;
      count_t = sl.count;
      exist_t = sl.exist;
      first = false;
    } else {
      total = add(total, sl.total);
      mask_t = add(mask_t, sl.mask);
      count_t = add(count_t, sl.count);
      exist_t = add(exist_t, sl.exist);
    }
  }
  double inv = 1.0 / static_cast<double>(batch.size());
  Var<double> objective = scale(total, inv);
  double loss_v = objective.value()[0];
  if (!std::isfinite(loss_v))
    throw NumericError("train: non-finite loss at step " + std::to_string(step));
  tape.backward(objective);
  opt.step(store, ctx.grads(), lr);
  TrainLogEntry e;
  e.step = step;
  e.loss = loss_v;
  e.mask_l = mask_t.value()[0] * inv;
  e.count_l = count_t.value()[0] * inv;
  e.exist_l = exist_t.value()[0] * inv;
  e.lr = lr;
  return e;
}

inline TrainResult train_model(const ModelConfig& mcfg, const LossWeights& lw,
                               const OptimConfig& oc, const Dataset& ds, std::uint64_t seed) {
  mcfg.validate();
  oc.validate();
  check_dataset_model(mcfg, ds);

  Rng init_rng(derive_seed(seed, 0x1u));
  ParamStore<double> store = init_params<double>(mcfg, init_rng);
  AdamW opt(0.9, 0.999, 1e-8, oc.weight_decay);

  Rng batch_rng(derive_seed(seed, 0x2u));
  std::vector<int> order(ds.samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // forces a shuffle before the first batch

  TrainResult result;
  for (int step = 0; step < oc.steps; ++step) {
    std::vector<int> batch;
    batch.reserve(static_cast<std::size_t>(oc.batch));
    for (int b = 0; b < oc.batch; ++b) {
      if (cursor >= order.size()) {
        batch_rng.shuffle(order.begin(), order.end());
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    double lr = scheduled_lr(oc, step);
    result.log.push_back(train_step(store, opt, mcfg, lw, ds, batch, lr, step));
  }
  result.params = std::move(store);
  return result;
}

inline std::string log_to_jsonl(const std::vector<TrainLogEntry>& log) {
  std::string out;
  for (const auto& e : log) {
    out += format_log_line(e);
    out += '\n';
  }
  return out;
}

}  // namespace greskit
