#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "greskit/counting.hpp"
#include "greskit/mask.hpp"

namespace greskit {

enum class Polarity { positive, negative };

// Per-sample quantities every metric is computed from.
struct EvalRecord {
  int image_id = 0;
  double iou = 0.0;          // |pred ∧ gt| / |pred ∨ gt|, 1.0 when the union is empty
  long long inter = 0, uni = 0;
  bool pred_empty = false;   // existence head said "no target"
  bool gt_empty = false;
  std::vector<double> pred_counts;  // raw (unrounded); empty when counting is off
  std::vector<int> gt_counts;
  Polarity polarity = Polarity::positive;
};

// Intersection over union of two binary masks; the empty/empty case is 1.
inline double sample_iou(const Mask& pred, const Mask& gt) {
  pred.validate();
  gt.validate();
  if (pred.h != gt.h || pred.w != gt.w) throw ShapeError("sample_iou: mask extents differ");
  long long inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    inter += pred.data[i] & gt.data[i];
    uni += pred.data[i] | gt.data[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

// Builds a record from the emitted mask and ground truth. `pred_empty` is
// the existence decision; an empty-declared prediction must come with an
// all-background mask.
inline EvalRecord make_record(int image_id, const Mask& pred, const Mask& gt, bool pred_empty,
                              Polarity polarity, std::vector<double> pred_counts = {},
                              std::vector<int> gt_counts = {}) {
  if (pred.h != gt.h || pred.w != gt.w) throw ShapeError("make_record: mask extents differ");
  if (pred_empty && !pred.empty())
    throw InputError("make_record: empty-declared prediction has foreground pixels");
  EvalRecord r;
  r.image_id = image_id;
  r.pred_empty = pred_empty;
  r.gt_empty = gt.empty();
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    r.inter += pred.data[i] & gt.data[i];
    r.uni += pred.data[i] | gt.data[i];
  }
  r.iou = r.uni == 0 ? 1.0 : static_cast<double>(r.inter) / static_cast<double>(r.uni);
  r.pred_counts = std::move(pred_counts);
  r.gt_counts = std::move(gt_counts);
  r.polarity = polarity;
  return r;
}

namespace detail {
inline void require_records(const std::vector<EvalRecord>& rs, const char* op) {
  if (rs.empty()) throw UndefinedError(std::string(op) + ": no records");
}
}  // namespace detail

// Mean per-sample IoU; empty-target true positives count 1, false
// negatives (missed empties and spurious empties) count 0.
inline double giou(const std::vector<EvalRecord>& rs) {
  detail::require_records(rs, "giou");
  double acc = 0;
  for (const auto& r : rs) {
    if (r.gt_empty)
      acc += r.pred_empty ? 1.0 : 0.0;
    else
      acc += r.pred_empty ? 0.0 : r.iou;
  }
  return acc / static_cast<double>(rs.size());
}

// Dataset-level total intersection over total union. Samples with an empty
// union (empty gt and empty prediction) contribute to neither sum.
inline double ciou(const std::vector<EvalRecord>& rs) {
  detail::require_records(rs, "ciou");
  long long inter = 0, uni = 0;
  for (const auto& r : rs) {
    inter += r.inter;
    uni += r.uni;
  }
  if (uni == 0) throw UndefinedError("ciou: total union is zero");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// Fraction of empty-target expressions the model correctly rejected.
inline double n_acc(const std::vector<EvalRecord>& rs) {
  long long total = 0, hit = 0;
  for (const auto& r : rs)
    if (r.gt_empty) {
      ++total;
      hit += r.pred_empty;
    }
  if (total == 0) throw UndefinedError("n_acc: no empty-target records");
  return static_cast<double>(hit) / static_cast<double>(total);
}

// Mean IoU over samples that contain referred objects.
inline double miou(const std::vector<EvalRecord>& rs) {
  long long total = 0;
  double acc = 0;
  for (const auto& r : rs)
    if (!r.gt_empty) {
      ++total;
      acc += r.pred_empty ? 0.0 : r.iou;
    }
  if (total == 0) throw UndefinedError("miou: no nonempty-target records");
  return acc / static_cast<double>(total);
}

// Fraction of nonempty-gt samples with IoU >= t.
inline double pr_at(const std::vector<EvalRecord>& rs, double t) {
  long long total = 0, hit = 0;
  for (const auto& r : rs)
    if (!r.gt_empty) {
      ++total;
      double eff = r.pred_empty ? 0.0 : r.iou;
      hit += eff >= t;
    }
  if (total == 0) throw UndefinedError("pr_at: no nonempty-target records");
  return static_cast<double>(hit) / static_cast<double>(total);
}

// Positive sentences score their IoU; negative sentences score 1 for a
// correct rejection and 0 otherwise; unweighted mean over all records.
inline double riou(const std::vector<EvalRecord>& rs) {
  detail::require_records(rs, "riou");
  double acc = 0;
  for (const auto& r : rs) {
    if (r.polarity == Polarity::negative)
      acc += r.pred_empty ? 1.0 : 0.0;
    else
      acc += r.pred_empty ? 0.0 : r.iou;
  }
  return acc / static_cast<double>(rs.size());
}

// Per-image empty-target recognition rate, averaged over images that have
// at least one empty-target expression.
inline double mrr(const std::vector<EvalRecord>& rs) {
  detail::require_records(rs, "mrr");
  std::map<int, std::pair<long long, long long>> per_image;  // image -> (hits, total)
  for (const auto& r : rs)
    if (r.gt_empty) {
      auto& [hits, total] = per_image[r.image_id];
      hits += r.pred_empty;
      ++total;
    }
  if (per_image.empty()) throw UndefinedError("mrr: no empty-target records");
  double acc = 0;
  for (const auto& [img, ht] : per_image)
    acc += static_cast<double>(ht.first) / static_cast<double>(ht.second);
  return acc / static_cast<double>(per_image.size());
}

// Count accuracy over records that carry count predictions.
inline double c_acc_records(const std::vector<EvalRecord>& rs) {
  std::vector<std::vector<double>> pred;
  std::vector<std::vector<int>> gt;
  for (const auto& r : rs)
    if (!r.pred_counts.empty()) {
      pred.push_back(r.pred_counts);
      gt.push_back(r.gt_counts);
    }
  if (pred.empty()) throw UndefinedError("c_acc: no records with count predictions");
  return c_acc(pred, gt);
}

// Full report. Metrics whose denominators are empty are carried as
// "undefined" and serialize to null.
struct MetricReport {
  struct Value {
    double v = 0.0;
    bool defined = false;
  };
  Value giou, ciou, n_acc, acc, miou, oiou, riou, mrr, c_acc;
  std::map<double, Value> pr_at;  // threshold -> value
};

namespace detail {
template <typename F>
MetricReport::Value try_metric(F&& f) {
  MetricReport::Value out;
  try {
    out.v = f();
    out.defined = true;
  } catch (const UndefinedError&) {
    out.defined = false;
  }
  return out;
}
}  // namespace detail

inline MetricReport compute_report(const std::vector<EvalRecord>& rs,
                                   const std::vector<double>& thresholds = {0.7}) {
  MetricReport rep;
  rep.giou = detail::try_metric([&] { return giou(rs); });
  rep.ciou = detail::try_metric([&] { return ciou(rs); });
  rep.n_acc = detail::try_metric([&] { return n_acc(rs); });
  rep.acc = rep.n_acc;  // the Ref-ZOM accuracy shares the rejection formula
  rep.miou = detail::try_metric([&] { return miou(rs); });
  rep.oiou = rep.ciou;  // same metric under its other name
  rep.riou = detail::try_metric([&] { return riou(rs); });
  rep.mrr = detail::try_metric([&] { return mrr(rs); });
  rep.c_acc = detail::try_metric([&] { return c_acc_records(rs); });
  for (double t : thresholds) rep.pr_at[t] = detail::try_metric([&] { return pr_at(rs, t); });
  return rep;
}

// Fixed-format serialization: stable key order, 6 fractional digits,
// undefined metrics as null.
inline std::string report_to_json(const MetricReport& rep) {
  auto fmt = [](MetricReport::Value v) {
    if (!v.defined) return std::string("null");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v.v);
    return std::string(buf);
  };
  std::string out = "{\n";
  out += "  \"giou\": " + fmt(rep.giou) + ",\n";
  out += "  \"ciou\": " + fmt(rep.ciou) + ",\n";
  out += "  \"n_acc\": " + fmt(rep.n_acc) + ",\n";
  out += "  \"acc\": " + fmt(rep.acc) + ",\n";
  out += "  \"miou\": " + fmt(rep.miou) + ",\n";
  out += "  \"oiou\": " + fmt(rep.oiou) + ",\n";
  out += "  \"riou\": " + fmt(rep.riou) + ",\n";
  out += "  \"mrr\": " + fmt(rep.mrr) + ",\n";
  for (const auto& [t, v] : rep.pr_at) {
    char key[32];
    std::snprintf(key, sizeof key, "pr@%.2f", t);
    out += "  \"" + std::string(key) + "\": " + fmt(v) + ",\n";
  }
  out += "  \"c_acc\": " + fmt(rep.c_acc) + "\n";
  out += "}\n";
  return out;
}

}  // namespace greskit
