#include <catch2/catch_amalgamated.hpp>

#include "greskit/counting.hpp"
#include "testutil.hpp"

using namespace greskit;
using testutil::random_tensor;

namespace {

ParamStore<double> aoc_store(std::uint64_t seed, int d, int categories, int levels) {
  Rng rng(seed);
  ParamStore<double> store;
  register_aoc(store, rng, d, categories, levels);
  return store;
}

void set_zero(ParamStore<double>& store, const std::string& name) {
  for (auto& v : store.at(name).vec()) v = 0.0;
}

void silence_count_heads(ParamStore<double>& store, int levels) {
  for (int i = 0; i < levels; ++i) {
    std::string p = "aoc.count." + std::to_string(i);
    set_zero(store, p + ".0.weight");
    set_zero(store, p + ".0.bias");
    set_zero(store, p + ".1.weight");
    set_zero(store, p + ".1.bias");
  }
}

void copy_count_head(ParamStore<double>& store, int from, int to) {
  for (const char* leaf : {".0.weight", ".0.bias", ".1.weight", ".1.bias"})
    store.at("aoc.count." + std::to_string(to) + leaf) =
        store.at("aoc.count." + std::to_string(from) + leaf);
}

}  // namespace

TEST_CASE("silent count heads leave only the existence bias") {
  const int d = 4, C = 3, levels = 3;
  ParamStore<double> store = aoc_store(101, d, C, levels);
  silence_count_heads(store, levels);
  Rng rng(102);
  Tape<double> tape;
  ParamCtx<double> ctx(tape, store);
  std::vector<Var<double>> qs;
  for (int i = 0; i < levels; ++i) qs.push_back(tape.constant(random_tensor(rng, {3, d})));

  CountPrediction<double> cp = count_forward(ctx, qs, TokenReduce::sum);
  CHECK(testutil::max_abs(cp.pred.value()) == 0.0);
  const auto& bias = store.at("aoc.exist.bias");
  CHECK(cp.exist_logits.value().at(0, 0) == bias[0]);
  CHECK(cp.exist_logits.value().at(0, 1) == bias[1]);
}

TEST_CASE("identical stages fuse to the single-stage count") {
  const int d = 4, C = 3, levels = 3;
  ParamStore<double> store = aoc_store(103, d, C, levels);
  copy_count_head(store, 0, 1);
  copy_count_head(store, 0, 2);
  Rng rng(104);
  Tensor<double> q = random_tensor(rng, {4, d});
  Tape<double> tape;
  ParamCtx<double> ctx(tape, store);
  std::vector<Var<double>> qs = {tape.constant(q), tape.constant(q), tape.constant(q)};
  CountPrediction<double> cp = count_forward(ctx, qs, TokenReduce::sum);
  CHECK(testutil::max_abs_diff(cp.fused.value(), cp.per_level[0].value()) < 1e-14);
}

TEST_CASE("crafted heads sum token counts to the expected category totals") {
  const int d = 2, C = 3, levels = 2;
  ParamStore<double> store = aoc_store(105, d, C, levels);
  // First layer = identity, second layer maps token 0 -> (1,0,0) and
  // token 1 -> (0,2,0); every stage shares the same head.
  for (int i = 0; i < levels; ++i) {
    std::string p = "aoc.count." + std::to_string(i);
    store.at(p + ".0.weight") = Tensor<double>::of({{1.0, 0.0}, {0.0, 1.0}});
    set_zero(store, p + ".0.bias");
    store.at(p + ".1.weight") = Tensor<double>::of({{1.0, 0.0, 0.0}, {0.0, 2.0, 0.0}});
    set_zero(store, p + ".1.bias");
  }
  Tensor<double> q = Tensor<double>::of({{1.0, 0.0}, {0.0, 1.0}});
  Tape<double> tape;
  ParamCtx<double> ctx(tape, store);
  std::vector<Var<double>> qs = {tape.constant(q), tape.constant(q)};
  CountPrediction<double> cp = count_forward(ctx, qs, TokenReduce::sum);

  for (int i = 0; i < levels; ++i) {
    CHECK(cp.per_level[static_cast<std::size_t>(i)].value().at(0, 0) == 1.0);
    CHECK(cp.per_level[static_cast<std::size_t>(i)].value().at(1, 1) == 2.0);
  }
  REQUIRE(cp.pred.value().rows() == 1);
  REQUIRE(cp.pred.value().cols() == C);
  CHECK(cp.pred.value().at(0, 0) == 1.0);
  CHECK(cp.pred.value().at(0, 1) == 2.0);
  CHECK(cp.pred.value().at(0, 2) == 0.0);
}

TEST_CASE("mean token reduction is the summed reduction over the token count") {
  const int d = 4, C = 2, levels = 2;
  ParamStore<double> store = aoc_store(106, d, C, levels);
  Rng rng(107);
  const int n = 5;
  std::vector<Tensor<double>> qt;
  for (int i = 0; i < levels; ++i) qt.push_back(random_tensor(rng, {n, d}));

  auto run = [&](TokenReduce reduce) {
    Tape<double> tape;
    ParamCtx<double> ctx(tape, store);
    std::vector<Var<double>> qs;
    for (const auto& q : qt) qs.push_back(tape.constant(q));
    return count_forward(ctx, qs, reduce).pred.value();
  };
  Tensor<double> s = run(TokenReduce::sum);
  Tensor<double> m = run(TokenReduce::mean);
  for (int c = 0; c < C; ++c)
    CHECK(m.at(0, c) == Catch::Approx(s.at(0, c) / n).margin(1e-14));
}

TEST_CASE("count regression reproduces the piecewise penalty values") {
  ParamStore<double> store;
  Tape<double> tape;
  ParamCtx<double> ctx(tape, store);
  auto loss_at = [&](double pred, int gt) {
    Var<double> p = tape.constant(Tensor<double>({1, 1}, {pred}));
    return count_loss(ctx, p, {gt}).value()[0];
  };
  CHECK(loss_at(0.0, 0) == 0.0);
  CHECK(loss_at(0.5, 0) == Catch::Approx(0.125).margin(1e-15));
  CHECK(loss_at(2.0, 0) == Catch::Approx(1.5).margin(1e-15));
  CHECK(loss_at(-0.5, 0) == Catch::Approx(0.125).margin(1e-15));

  // Mean over categories.
  Var<double> p = tape.constant(Tensor<double>::of({{0.5, 2.0}}));
  CHECK(count_loss(ctx, p, {0, 0}).value()[0] == Catch::Approx(0.8125).margin(1e-15));
}

TEST_CASE("count penalty is continuously differentiable at the crossover") {
  ParamStore<double> store;
  Tape<double> tape;
  ParamCtx<double> ctx(tape, store);
  const double eps = 1e-9;
  auto loss_at = [&](double pred) {
    Var<double> p = tape.constant(Tensor<double>({1, 1}, {pred}));
    return count_loss(ctx, p, {0}).value()[0];
  };
  double below = loss_at(1.0 - eps);
  double above = loss_at(1.0 + eps);
  CHECK(std::abs(below - 0.5) < 2e-9);
  CHECK(std::abs(above - 0.5) < 2e-9);
  CHECK((above - below) / (2 * eps) == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("count regression validates its inputs") {
  ParamStore<double> store;
  Tape<double> tape;
  ParamCtx<double> ctx(tape, store);
  Var<double> p = tape.constant(Tensor<double>::of({{0.5, 1.0}}));
  CHECK_THROWS_AS(count_loss(ctx, p, {1}), ShapeError);
  CHECK_THROWS_AS(count_loss(ctx, p, {1, -2}), InputError);
}

TEST_CASE("existence cross-entropy matches hand values") {
  ParamStore<double> store;
  Tape<double> tape;
  ParamCtx<double> ctx(tape, store);
  auto loss_at = [&](double l0, double l1, int gt) {
    Var<double> logits = tape.constant(Tensor<double>::of({{l0, l1}}));
    return existence_loss(ctx, logits, gt).value()[0];
  };
  CHECK(loss_at(0.7, 0.7, 0) == Catch::Approx(std::log(2.0)).margin(1e-15));
  CHECK(loss_at(0.7, 0.7, 1) == Catch::Approx(std::log(2.0)).margin(1e-15));
  CHECK(loss_at(20.0, -20.0, 0) < 1e-8);
  CHECK(loss_at(1.0, 0.0, 1) == Catch::Approx(std::log(1.0 + std::exp(1.0))).margin(1e-12));
}

TEST_CASE("existence cross-entropy validates its inputs") {
  ParamStore<double> store;
  Tape<double> tape;
  ParamCtx<double> ctx(tape, store);
  Var<double> ok = tape.constant(Tensor<double>::of({{0.0, 0.0}}));
  CHECK_THROWS_AS(existence_loss(ctx, ok, 2), InputError);
  Var<double> bad = tape.constant(Tensor<double>::of({{0.0, 0.0, 0.0}}));
  CHECK_THROWS_AS(existence_loss(ctx, bad, 1), ShapeError);
}

TEST_CASE("existence supervision never reaches the counting trunk") {
  const int d = 3, C = 2, levels = 2;
  ParamStore<double> store = aoc_store(108, d, C, levels);
  Rng rng(109);
  store.add("in.q0", random_tensor(rng, {3, d}));
  store.add("in.q1", random_tensor(rng, {3, d}));

  Tape<double> tape;
  ParamCtx<double> ctx(tape, store);
  std::vector<Var<double>> qs = {ctx.param("in.q0"), ctx.param("in.q1")};
  CountPrediction<double> cp = count_forward(ctx, qs, TokenReduce::sum, true);
  Var<double> loss = existence_loss(ctx, cp.exist_logits, 1);
  tape.backward(loss);

  auto grads = ctx.grads();
  for (const auto& [name, g] : grads) {
    if (name.rfind("aoc.exist", 0) == 0) continue;
    INFO(name);
    CHECK(testutil::max_abs(*g) == 0.0);
  }

  // The classifier itself still learns: its analytic gradient matches
  // central differences.
  ParamStore<double> probe = store;
  auto eval = [&]() {
    Tape<double> t2;
    ParamCtx<double> c2(t2, probe);
    std::vector<Var<double>> q2 = {c2.param("in.q0"), c2.param("in.q1")};
    CountPrediction<double> cp2 = count_forward(c2, q2, TokenReduce::sum, true);
    return existence_loss(c2, cp2.exist_logits, 1).value()[0];
  };
  const double h = 1e-5;
  for (const char* name : {"aoc.exist.weight", "aoc.exist.bias"}) {
    Tensor<double>& pt = probe.at(name);
    Tensor<double> num = pt;
    for (std::size_t i = 0; i < pt.numel(); ++i) {
      double orig = pt[i];
      pt[i] = orig + h;
      double fp = eval();
      pt[i] = orig - h;
      double fm = eval();
      pt[i] = orig;
      num[i] = (fp - fm) / (2.0 * h);
    }
    CHECK(testutil::rel_err(*grads.at(name), num) < 1e-4);
  }
}

TEST_CASE("count forward gradients match finite differences") {
  const int d = 3, C = 2, levels = 2;
  for (std::uint64_t seed : {111u, 112u}) {
    ParamStore<double> store = aoc_store(seed, d, C, levels);
    Rng rng(seed + 1100);
    store.add("in.q0", random_tensor(rng, {3, d}));
    store.add("in.q1", random_tensor(rng, {3, d}));
    double err = testutil::param_rel_err(store, [&](ParamCtx<double>& ctx) {
      std::vector<Var<double>> qs = {ctx.param("in.q0"), ctx.param("in.q1")};
      CountPrediction<double> cp = count_forward(ctx, qs, TokenReduce::sum, false);
      return add(sum_all(mul(cp.pred, cp.pred)),
                 sum_all(mul(cp.exist_logits, cp.exist_logits)));
    });
    CHECK(err < 1e-4);
  }
}

TEST_CASE("count forward validates its query sets") {
  const int d = 3;
  ParamStore<double> store = aoc_store(113, d, 2, 2);
  Rng rng(114);
  Tape<double> tape;
  ParamCtx<double> ctx(tape, store);
  std::vector<Var<double>> empty;
  CHECK_THROWS_AS(count_forward(ctx, empty, TokenReduce::sum), ShapeError);
  std::vector<Var<double>> ragged = {tape.constant(random_tensor(rng, {3, d})),
                                     tape.constant(random_tensor(rng, {4, d}))};
  CHECK_THROWS_AS(count_forward(ctx, ragged, TokenReduce::sum), ShapeError);
}

TEST_CASE("query-pooled existence head reduces to its bias when silent") {
  const int d = 4;
  Rng rng(115);
  ParamStore<double> store;
  register_exist_on_queries(store, rng, d);
  set_zero(store, "aoc.exist.weight");
  Tape<double> tape;
  ParamCtx<double> ctx(tape, store);
  Var<double> logits = exist_from_queries(ctx, tape.constant(random_tensor(rng, {5, d})));
  REQUIRE(logits.value().rows() == 1);
  REQUIRE(logits.value().cols() == 2);
  const auto& bias = store.at("aoc.exist.bias");
  CHECK(logits.value().at(0, 0) == bias[0]);
  CHECK(logits.value().at(0, 1) == bias[1]);
}

TEST_CASE("count accuracy rounds and scores sample-wise") {
  std::vector<std::vector<int>> gt = {{1, 0, 2, 0}, {0, 1, 0, 0}, {2, 2, 0, 1}, {0, 0, 0, 0}};
  std::vector<std::vector<double>> exact = {{1, 0, 2, 0}, {0, 1, 0, 0}, {2, 2, 0, 1}, {0, 0, 0, 0}};
  CHECK(c_acc(exact, gt) == 1.0);

  auto off = exact;
  off[1][1] = 2.0;  // one category wrong in one of four samples
  CHECK(c_acc(off, gt) == 0.75);

  auto noisy = exact;
  for (auto& row : noisy)
    for (auto& v : row) v += 0.4;
  CHECK(c_acc(noisy, gt) == 1.0);

  CHECK_THROWS_AS(c_acc({}, {}), UndefinedError);
  CHECK_THROWS_AS(c_acc({{1.0}}, {}), ShapeError);
  CHECK_THROWS_AS(c_acc({{1.0}}, {{1, 2}}), ShapeError);
}
