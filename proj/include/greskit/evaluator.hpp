#pragma once

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "greskit/trainer.hpp"

namespace greskit {

struct SamplePrediction {
  Mask mask;
  bool pred_empty = false;
  std::vector<double> counts;  // empty when counting disabled
  std::vector<double> alphas;  // level-gate diagnostics
  std::vector<double> gates;   // token-gate diagnostics (flattened)
};

// Any per-sample predictor can feed the metric pipeline; the model-backed one
// below is the production path, test stubs are the other.
using Predictor = std::function<SamplePrediction(const GresSample&)>;

inline Predictor model_predictor(const ParamStore<double>& store, const ModelConfig& mcfg) {
  return [&store, mcfg](const GresSample& s) {
    Tape<double> tape;
    ParamCtx<double> ctx(tape, store, /*trainable=*/false);
    ForwardOut<double> fo = model_forward(ctx, mcfg, s.grid, s.tokens);
    SamplePrediction p;
    p.mask = decode_prediction(fo.mask_logits.value(), fo.exist_logits.value(), mcfg.grid_h,
                               mcfg.grid_w, &p.pred_empty);
    if (fo.has_count) p.counts = fo.count.pred.value().vec();
    for (const auto& a : fo.alphas) p.alphas.push_back(a.value()[0]);
    for (const auto& g : fo.gates)
      for (double v : g.value().vec()) p.gates.push_back(v);
    return p;
  };
}

inline std::vector<EvalRecord> collect_records(const Dataset& ds, const Predictor& predict,
                                               std::vector<SamplePrediction>* dump = nullptr) {
  std::vector<EvalRecord> records;
  records.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    SamplePrediction p = predict(s);
    Mask effective = p.pred_empty ? Mask::zeros(s.gt_mask.h, s.gt_mask.w) : p.mask;
    records.push_back(make_record(s.image_id, effective, s.gt_mask, p.pred_empty, s.polarity,
                                  p.counts, s.gt_counts));
    if (dump) dump->push_back(std::move(p));
  }
  return records;
}

inline std::string predictions_to_jsonl(const Dataset& ds, const std::vector<EvalRecord>& records,
                                        const std::vector<SamplePrediction>& preds) {
  auto num_list = [](const std::vector<double>& v) {
    std::string s = "[";
    char buf[40];
    for (std::size_t i = 0; i < v.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g", v[i]);
      if (i) s += ", ";
      s += buf;
    }
    return s + "]";
  };
  auto int_list = [](const std::vector<int>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(v[i]);
    }
    return s + "]";
  };
  std::string out;
  char buf[160];
  for (std::size_t i = 0; i < records.size(); ++i) {
    const EvalRecord& r = records[i];
    const GresSample& s = ds.samples[i];
    std::snprintf(buf, sizeof(buf),
                  "{\"image_id\": %d, \"pred_empty\": %s, \"gt_empty\": %s, \"inter\": %lld, "
                  "\"union\": %lld, \"iou\": %.17g, ",
                  r.image_id, r.pred_empty ? "true" : "false", r.gt_empty ? "true" : "false",
                  static_cast<long long>(r.inter), static_cast<long long>(r.uni), r.iou);
    out += buf;
    out += "\"pred_counts\": " + num_list(r.pred_counts) + ", ";
    out += "\"gt_counts\": " + int_list(s.gt_counts) + ", ";
    out += "\"polarity\": \"" + to_string(r.polarity) + "\", ";
    out += "\"alphas\": " + num_list(preds[i].alphas) + ", ";
    out += "\"token_gates\": " + num_list(preds[i].gates) + "}\n";
  }
  return out;
}

struct EvalOutput {
  MetricReport report;
  std::vector<EvalRecord> records;
  std::vector<SamplePrediction> predictions;
};

inline EvalOutput evaluate_dataset(const Dataset& ds, const Predictor& predict) {
  EvalOutput out;
  out.records = collect_records(ds, predict, &out.predictions);
  out.report = compute_report(out.records);
  return out;
}

inline EvalOutput evaluate_model(const ParamStore<double>& store, const ModelConfig& mcfg,
                                 const Dataset& ds) {
  check_dataset_model(mcfg, ds);
  return evaluate_dataset(ds, model_predictor(store, mcfg));
}

}  // namespace greskit
