#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "greskit/evaluator.hpp"

namespace greskit {

inline const std::vector<std::string>& known_ablation_axes() {
  static const std::vector<std::string> axes = {
      "hsd_off",      "aoc_off",      "aoc_binary_only", "intra_off",   "inter_off",
      "deep_supervision_on", "sdm_layers_1", "sdm_layers_2",    "sdm_layers_3", "sdm_layers_4"};
  return axes;
}

inline ModelConfig apply_axis(ModelConfig base, const std::string& axis) {
  if (axis == "hsd_off") base.hsd_off = true;
  else if (axis == "aoc_off") base.aoc_off = true;
  else if (axis == "aoc_binary_only") base.aoc_binary_only = true;
  else if (axis == "intra_off") base.intra_off = true;
  else if (axis == "inter_off") base.inter_off = true;
  else if (axis == "deep_supervision_on") base.deep_supervision = true;
  else if (axis.rfind("sdm_layers_", 0) == 0 && axis.size() == 12 && axis[11] >= '1' &&
           axis[11] <= '4')
    base.sdm_layers = axis[11] - '0';
  else
    throw ConfigError("ablate: unknown axis '" + axis + "'");
  base.validate();
  return base;
}

struct AblationRow {
  std::string variant;
  MetricReport report;
  std::vector<SamplePrediction> predictions;
};

struct AblationTable {
  std::vector<AblationRow> rows;
};

// Trains and evaluates the baseline plus one variant per axis, all from the
// same seed so rows differ only by the toggled switch.
inline AblationTable run_ablation(const ModelConfig& base, const LossWeights& lw,
                                  const OptimConfig& oc, const Dataset& ds, std::uint64_t seed,
                                  const std::vector<std::string>& axes) {
  AblationTable table;
  auto run_one = [&](const std::string& name, const ModelConfig& mcfg) {
    TrainResult tr = train_model(mcfg, lw, oc, ds, seed);
    EvalOutput ev = evaluate_model(tr.params, mcfg, ds);
    table.rows.push_back({name, std::move(ev.report), std::move(ev.predictions)});
  };
  run_one("baseline", base);
  for (const auto& axis : axes) run_one(axis, apply_axis(base, axis));
  return table;
}

namespace detail {

inline std::string metric_cell(const MetricReport::Value& v) {
  if (!v.defined) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v.v);
  return buf;
}

inline std::string metric_json(const MetricReport::Value& v) {
  if (!v.defined) return "null";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v.v);
  return buf;
}

}  // namespace detail

inline std::string ablation_to_json(const AblationTable& table) {
  std::string out = "[\n";
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const AblationRow& r = table.rows[i];
    out += "  {\"variant\": \"" + r.variant + "\", \"gIoU\": " + detail::metric_json(r.report.giou) +
           ", \"cIoU\": " + detail::metric_json(r.report.ciou) +
           ", \"N-acc\": " + detail::metric_json(r.report.n_acc) +
           ", \"C-acc\": " + detail::metric_json(r.report.c_acc) + "}";
    out += i + 1 < table.rows.size() ? ",\n" : "\n";
  }
  out += "]\n";
  return out;
}

inline std::string ablation_to_text(const AblationTable& table) {
  std::size_t name_w = 7;  // "variant"
  for (const auto& r : table.rows) name_w = std::max(name_w, r.variant.size());
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(s.size(), w), ' ');
    return s;
  };
  std::string out = pad("variant", name_w) + "  gIoU      cIoU      N-acc     C-acc\n";
  for (const auto& r : table.rows) {
    out += pad(r.variant, name_w) + "  " + pad(detail::metric_cell(r.report.giou), 8) + "  " +
           pad(detail::metric_cell(r.report.ciou), 8) + "  " +
           pad(detail::metric_cell(r.report.n_acc), 8) + "  " +
           detail::metric_cell(r.report.c_acc) + "\n";
  }
  return out;
}

}  // namespace greskit
