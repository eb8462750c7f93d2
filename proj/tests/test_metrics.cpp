#include <catch2/catch_amalgamated.hpp>

#include "greskit/metrics.hpp"
#include "greskit/rng.hpp"

using namespace greskit;

namespace {

Mask mask_1xn(std::initializer_list<int> bits) {
  Mask m = Mask::zeros(1, static_cast<int>(bits.size()));
  int i = 0;
  for (int b : bits) m.data[static_cast<std::size_t>(i++)] = static_cast<std::uint8_t>(b);
  return m;
}

Mask random_mask(Rng& rng, int h, int w, double p_fg) {
  Mask m = Mask::zeros(h, w);
  for (auto& v : m.data) v = rng.uniform(0.0, 1.0) < p_fg ? 1 : 0;
  return m;
}

// Record with prescribed intersection/union built from 1-d masks.
EvalRecord rec_iou(int image_id, int inter, int uni, Polarity pol = Polarity::positive) {
  Mask gt = Mask::zeros(1, std::max(1, uni + 1));
  Mask pred = Mask::zeros(1, std::max(1, uni + 1));
  // gt occupies [0, uni); pred covers [0, inter) plus nothing else, then the
  // prediction is padded with gt-external pixels until the union matches.
  for (int i = 0; i < uni; ++i) gt.data[static_cast<std::size_t>(i)] = 1;
  for (int i = 0; i < inter; ++i) pred.data[static_cast<std::size_t>(i)] = 1;
  return make_record(image_id, pred, gt, uni == 0, pol);
}

}  // namespace

TEST_CASE("per-sample overlap follows the pixel definition") {
  Mask a = mask_1xn({1, 1, 0, 0});
  Mask b = mask_1xn({0, 1, 1, 0});
  CHECK(sample_iou(a, b) == Catch::Approx(1.0 / 3.0).margin(1e-15));
  CHECK(sample_iou(a, a) == 1.0);
  CHECK(sample_iou(Mask::zeros(2, 2), Mask::zeros(2, 2)) == 1.0);
  Mask c = Mask::zeros(1, 5);
  CHECK_THROWS_AS(sample_iou(a, c), ShapeError);
}

TEST_CASE("record construction checks the emitted mask against the decision") {
  Mask gt = mask_1xn({1, 0, 1, 0});
  Mask pred = mask_1xn({1, 1, 0, 0});
  EvalRecord r = make_record(7, pred, gt, false, Polarity::positive);
  CHECK(r.image_id == 7);
  CHECK(r.inter == 1);
  CHECK(r.uni == 3);
  CHECK(r.iou == Catch::Approx(1.0 / 3.0).margin(1e-15));
  CHECK_FALSE(r.gt_empty);

  CHECK_THROWS_AS(make_record(0, pred, gt, true, Polarity::positive), InputError);
  CHECK_THROWS_AS(make_record(0, pred, Mask::zeros(2, 2), false, Polarity::positive), ShapeError);
}

TEST_CASE("mean overlap scores empty targets by the rejection convention") {
  // (0.6 + 1 + 0) / 3: a 3-of-5 overlap, a correct rejection, a missed one.
  Mask gt = mask_1xn({1, 1, 1, 1, 1, 0});
  Mask pred = mask_1xn({1, 1, 1, 0, 0, 0});
  std::vector<EvalRecord> rs;
  rs.push_back(make_record(0, pred, gt, false, Polarity::positive));
  rs.push_back(make_record(1, Mask::zeros(1, 6), Mask::zeros(1, 6), true, Polarity::negative));
  rs.push_back(make_record(2, pred, Mask::zeros(1, 6), false, Polarity::negative));
  CHECK(giou(rs) == Catch::Approx((0.6 + 1.0 + 0.0) / 3.0).margin(1e-15));
}

TEST_CASE("declaring empty forfeits the overlap of a nonempty target") {
  Mask gt = mask_1xn({1, 1, 0, 0});
  std::vector<EvalRecord> rs = {make_record(0, Mask::zeros(1, 4), gt, true, Polarity::positive)};
  CHECK(giou(rs) == 0.0);
  CHECK(miou(rs) == 0.0);
}

TEST_CASE("cumulative overlap pools pixels and skips empty unions") {
  std::vector<EvalRecord> rs;
  rs.push_back(rec_iou(0, 2, 5));
  rs.push_back(rec_iou(1, 0, 0));  // both empty: contributes nothing
  rs.push_back(rec_iou(2, 2, 5));
  CHECK(ciou(rs) == Catch::Approx(0.4).margin(1e-15));

  std::vector<EvalRecord> only_empty = {rec_iou(0, 0, 0), rec_iou(1, 0, 0)};
  CHECK_THROWS_AS(ciou(only_empty), UndefinedError);
}

TEST_CASE("rejection accuracy counts only empty targets") {
  std::vector<EvalRecord> rs;
  rs.push_back(make_record(0, Mask::zeros(1, 4), Mask::zeros(1, 4), true, Polarity::negative));
  rs.push_back(make_record(1, mask_1xn({1, 0, 0, 0}), Mask::zeros(1, 4), false,
                           Polarity::negative));
  rs.push_back(make_record(2, mask_1xn({1, 0, 0, 0}), mask_1xn({1, 0, 0, 0}), false,
                           Polarity::positive));
  CHECK(n_acc(rs) == 0.5);

  std::vector<EvalRecord> no_empty = {rs[2]};
  CHECK_THROWS_AS(n_acc(no_empty), UndefinedError);
}

TEST_CASE("mean overlap over referred targets ignores empty ones") {
  std::vector<EvalRecord> rs;
  rs.push_back(rec_iou(0, 1, 5));   // 0.2
  rs.push_back(rec_iou(1, 4, 5));   // 0.8
  rs.push_back(rec_iou(2, 0, 0));   // empty target, excluded
  CHECK(miou(rs) == Catch::Approx(0.5).margin(1e-15));
  std::vector<EvalRecord> only_empty = {rec_iou(0, 0, 0)};
  CHECK_THROWS_AS(miou(only_empty), UndefinedError);
}

TEST_CASE("precision at zero is saturated and thresholds bite above it") {
  std::vector<EvalRecord> rs;
  rs.push_back(rec_iou(0, 1, 5));  // 0.2
  rs.push_back(rec_iou(1, 4, 5));  // 0.8
  rs.push_back(rec_iou(2, 3, 4));  // 0.75
  rs.push_back(rec_iou(3, 0, 0));  // excluded
  CHECK(pr_at(rs, 0.0) == 1.0);
  CHECK(pr_at(rs, 0.7) == Catch::Approx(2.0 / 3.0).margin(1e-15));
  CHECK(pr_at(rs, 0.8) == Catch::Approx(1.0 / 3.0).margin(1e-15));
  std::vector<EvalRecord> only_empty = {rec_iou(0, 0, 0)};
  CHECK_THROWS_AS(pr_at(only_empty, 0.5), UndefinedError);
}

TEST_CASE("sentence-polarity overlap scores rejections as binary outcomes") {
  std::vector<EvalRecord> rs;
  rs.push_back(rec_iou(0, 4, 5, Polarity::positive));  // 0.8
  rs.push_back(make_record(1, Mask::zeros(1, 4), Mask::zeros(1, 4), true, Polarity::negative));
  CHECK(riou(rs) == Catch::Approx(0.9).margin(1e-15));

  rs[1] = make_record(1, mask_1xn({1, 0, 0, 0}), Mask::zeros(1, 4), false, Polarity::negative);
  CHECK(riou(rs) == Catch::Approx(0.4).margin(1e-15));
}

TEST_CASE("per-image rejection rate averages over images not expressions") {
  std::vector<EvalRecord> rs;
  // Image 5: two empty-target expressions, both rejected.
  rs.push_back(make_record(5, Mask::zeros(1, 4), Mask::zeros(1, 4), true, Polarity::negative));
  rs.push_back(make_record(5, Mask::zeros(1, 4), Mask::zeros(1, 4), true, Polarity::negative));
  // Image 9: one empty-target expression, missed.
  rs.push_back(make_record(9, mask_1xn({1, 0, 0, 0}), Mask::zeros(1, 4), false,
                           Polarity::negative));
  // A positive expression is ignored by this metric.
  rs.push_back(rec_iou(9, 2, 4));
  CHECK(mrr(rs) == Catch::Approx(0.5).margin(1e-15));

  std::vector<EvalRecord> no_empty = {rec_iou(0, 2, 4)};
  CHECK_THROWS_AS(mrr(no_empty), UndefinedError);
}

TEST_CASE("count accuracy over records uses only the counted ones") {
  std::vector<EvalRecord> rs;
  rs.push_back(rec_iou(0, 2, 4));
  rs[0].pred_counts = {1.1, 0.2};
  rs[0].gt_counts = {1, 0};
  rs.push_back(rec_iou(1, 2, 4));
  rs[1].pred_counts = {2.0, 1.0};
  rs[1].gt_counts = {1, 1};
  rs.push_back(rec_iou(2, 2, 4));  // no counts: excluded
  CHECK(c_acc_records(rs) == 0.5);

  std::vector<EvalRecord> uncounted = {rec_iou(0, 2, 4)};
  CHECK_THROWS_AS(c_acc_records(uncounted), UndefinedError);
}

TEST_CASE("every aggregate matches a scalar recount over random mask pairs") {
  Rng rng(131);
  std::vector<EvalRecord> rs;
  struct Raw {
    long long inter, uni;
    bool pred_empty, gt_empty;
  };
  std::vector<Raw> raw;
  for (int s = 0; s < 100; ++s) {
    Mask gt = rng.uniform(0.0, 1.0) < 0.2 ? Mask::zeros(8, 8) : random_mask(rng, 8, 8, 0.3);
    bool declare_empty = rng.uniform(0.0, 1.0) < 0.25;
    Mask pred = declare_empty ? Mask::zeros(8, 8) : random_mask(rng, 8, 8, 0.3);
    rs.push_back(make_record(s / 2, pred, gt, declare_empty,
                             gt.empty() ? Polarity::negative : Polarity::positive));

    Raw r{0, 0, declare_empty, true};
    for (int i = 0; i < 64; ++i) {
      r.inter += pred.data[static_cast<std::size_t>(i)] & gt.data[static_cast<std::size_t>(i)];
      r.uni += pred.data[static_cast<std::size_t>(i)] | gt.data[static_cast<std::size_t>(i)];
      if (gt.data[static_cast<std::size_t>(i)]) r.gt_empty = false;
    }
    raw.push_back(r);
  }

  double g = 0, mi = 0, hit70 = 0;
  long long ti = 0, tu = 0, n_pos = 0, n_neg = 0, neg_hit = 0;
  for (const auto& r : raw) {
    double iou = r.uni == 0 ? 1.0 : double(r.inter) / double(r.uni);
    double eff = r.pred_empty ? 0.0 : iou;
    if (r.gt_empty) {
      g += r.pred_empty ? 1.0 : 0.0;
      ++n_neg;
      neg_hit += r.pred_empty;
    } else {
      g += eff;
      mi += eff;
      hit70 += eff >= 0.7;
      ++n_pos;
    }
    ti += r.inter;
    tu += r.uni;
  }

  MetricReport rep = compute_report(rs);
  REQUIRE(rep.giou.defined);
  REQUIRE(rep.ciou.defined);
  REQUIRE(rep.miou.defined);
  REQUIRE(rep.n_acc.defined);
  CHECK(std::abs(rep.giou.v - g / 100.0) < 1e-12);
  CHECK(std::abs(rep.ciou.v - double(ti) / double(tu)) < 1e-12);
  CHECK(std::abs(rep.miou.v - mi / double(n_pos)) < 1e-12);
  CHECK(std::abs(rep.n_acc.v - double(neg_hit) / double(n_neg)) < 1e-12);
  CHECK(std::abs(rep.pr_at.at(0.7).v - hit70 / double(n_pos)) < 1e-12);
  CHECK(rep.oiou.v == rep.ciou.v);
  CHECK(rep.acc.v == rep.n_acc.v);
}

TEST_CASE("the report serializes with fixed keys and nulls for undefined") {
  std::vector<EvalRecord> rs;
  rs.push_back(rec_iou(0, 3, 5));
  rs.push_back(make_record(1, Mask::zeros(1, 4), Mask::zeros(1, 4), true, Polarity::negative));
  MetricReport rep = compute_report(rs);
  std::string json = report_to_json(rep);

  CHECK(json.find("\"giou\": 0.800000") != std::string::npos);
  CHECK(json.find("\"ciou\": 0.600000") != std::string::npos);
  CHECK(json.find("\"n_acc\": 1.000000") != std::string::npos);
  CHECK(json.find("\"miou\": 0.600000") != std::string::npos);
  CHECK(json.find("\"pr@0.70\": 0.000000") != std::string::npos);
  CHECK(json.find("\"c_acc\": null") != std::string::npos);

  // Stable key order.
  const char* keys[] = {"giou", "ciou", "n_acc", "acc", "miou",
                        "oiou", "riou", "mrr",   "pr@0.70", "c_acc"};
  std::size_t pos = 0;
  for (const char* k : keys) {
    std::size_t at = json.find("\"" + std::string(k) + "\":", pos);
    REQUIRE(at != std::string::npos);
    pos = at;
  }
}

TEST_CASE("an empty record list leaves every metric undefined") {
  MetricReport rep = compute_report({});
  CHECK_FALSE(rep.giou.defined);
  CHECK_FALSE(rep.ciou.defined);
  CHECK_FALSE(rep.n_acc.defined);
  CHECK_FALSE(rep.miou.defined);
  CHECK_FALSE(rep.riou.defined);
  CHECK_FALSE(rep.mrr.defined);
  CHECK_FALSE(rep.c_acc.defined);
  CHECK_FALSE(rep.pr_at.at(0.7).defined);
}

TEST_CASE("run-length coding reproduces the reference examples") {
  CHECK(rle_encode(mask_1xn({0, 0, 0, 0})) == std::vector<int>{4});
  CHECK(rle_encode(mask_1xn({1, 1, 1, 1})) == std::vector<int>({0, 4}));
  CHECK(rle_encode(mask_1xn({1, 1, 0, 0})) == std::vector<int>({0, 2, 2}));
  CHECK(rle_encode(mask_1xn({0, 0, 1, 1})) == std::vector<int>({2, 2}));

  // Runs walk the pixels column-major.
  Mask m = Mask::zeros(2, 2);
  m.at(0, 1) = 1;
  CHECK(rle_encode(m) == std::vector<int>({2, 1, 1}));
}

TEST_CASE("run-length coding round-trips every three-by-three mask") {
  for (int bits = 0; bits < 512; ++bits) {
    Mask m = Mask::zeros(3, 3);
    for (int i = 0; i < 9; ++i) m.data[static_cast<std::size_t>(i)] = (bits >> i) & 1;
    Mask back = rle_decode(rle_encode(m), 3, 3);
    CHECK(back.data == m.data);
  }
}

TEST_CASE("run-length coding round-trips random masks of mixed extents") {
  Rng rng(132);
  for (int t = 0; t < 200; ++t) {
    int h = rng.uniform_int(1, 12);
    int w = rng.uniform_int(1, 12);
    Mask m = random_mask(rng, h, w, rng.uniform(0.05, 0.95));
    Mask back = rle_decode(rle_encode(m), h, w);
    REQUIRE(back.h == h);
    REQUIRE(back.w == w);
    CHECK(back.data == m.data);
  }
}

TEST_CASE("run-length decoding rejects malformed runs") {
  CHECK_THROWS_AS(rle_decode({3}, 2, 2), FormatError);       // wrong total
  CHECK_THROWS_AS(rle_decode({-1, 5}, 2, 2), FormatError);   // negative run
  CHECK_THROWS_AS(rle_decode({4}, 0, 4), FormatError);       // bad extent
  CHECK(rle_decode({0, 4}, 2, 2).area() == 4);
}
