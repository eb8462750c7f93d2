#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <filesystem>

#include "greskit/generator.hpp"

using namespace greskit;

namespace {

GenConfig small_cfg(std::uint64_t seed, int n_images = 24) {
  GenConfig cfg;
  cfg.n_images = n_images;
  cfg.grid_h = 16;
  cfg.grid_w = 16;
  cfg.categories = 3;
  cfg.seed = seed;
  return cfg;
}

detail::Scene hand_scene(int h, int w, int categories,
                         const std::vector<std::array<int, 4>>& placements) {
  detail::Scene scene;
  scene.grid.assign(static_cast<std::size_t>(h * w), 0);
  scene.per_category.assign(static_cast<std::size_t>(categories), 0);
  for (const auto& [cat, cx, cy, r] : placements) {
    auto cells = detail::stencil_cells(cat - 1, cx, cy, r, h, w);
    REQUIRE_FALSE(cells.empty());
    for (int c : cells) {
      REQUIRE(scene.grid[static_cast<std::size_t>(c)] == 0);
      scene.grid[static_cast<std::size_t>(c)] = cat;
    }
    scene.instances.push_back(Instance{cat, cx, cy, r, std::move(cells)});
    scene.per_category[static_cast<std::size_t>(cat - 1)]++;
  }
  return scene;
}

std::filesystem::path temp_dir(const char* tag) {
  auto dir = std::filesystem::temp_directory_path() / (std::string("greskit_") + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("the same seed generates byte-identical datasets") {
  GenConfig cfg = small_cfg(404);
  std::string a = dataset_to_json(generate_dataset(cfg)).dump(2);
  std::string b = dataset_to_json(generate_dataset(cfg)).dump(2);
  CHECK(a == b);

  cfg.seed = 405;
  std::string c = dataset_to_json(generate_dataset(cfg)).dump(2);
  CHECK(a != c);
}

TEST_CASE("saved dataset files are reproducible and round-trip losslessly") {
  GenConfig cfg = small_cfg(406, 12);
  Dataset ds = generate_dataset(cfg);
  Vocab vocab = Vocab::from_tokens(builtin_vocab_tokens());

  auto dir1 = temp_dir("ds1");
  auto dir2 = temp_dir("ds2");
  save_dataset(ds, vocab, dir1.string());
  save_dataset(generate_dataset(cfg), vocab, dir2.string());
  CHECK(read_text_file((dir1 / "dataset.json").string()) ==
        read_text_file((dir2 / "dataset.json").string()));
  CHECK(read_text_file((dir1 / "vocab.json").string()) ==
        read_text_file((dir2 / "vocab.json").string()));

  Dataset back = load_dataset((dir1 / "dataset.json").string());
  REQUIRE(back.samples.size() == ds.samples.size());
  CHECK(back.meta.grid_h == ds.meta.grid_h);
  CHECK(back.meta.categories == ds.meta.categories);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].grid == ds.samples[i].grid);
    CHECK(back.samples[i].tokens == ds.samples[i].tokens);
    CHECK(back.samples[i].gt_mask.data == ds.samples[i].gt_mask.data);
    CHECK(back.samples[i].gt_counts == ds.samples[i].gt_counts);
    CHECK(back.samples[i].gt_exist == ds.samples[i].gt_exist);
    CHECK(back.samples[i].scenario == ds.samples[i].scenario);
  }

  Vocab vback = load_vocab(vocab_path_for((dir1 / "dataset.json").string(), back.meta));
  CHECK(vback.tokens == vocab.tokens);
  std::filesystem::remove_all(dir1);
  std::filesystem::remove_all(dir2);
}

TEST_CASE("scenario shares land within two points of the requested mix") {
  GenConfig cfg = small_cfg(407, 500);
  Dataset ds = generate_dataset(cfg);
  REQUIRE(ds.samples.size() == 500);
  int n_multi = 0, n_single = 0, n_none = 0;
  for (const auto& s : ds.samples) {
    if (s.scenario == Scenario::multi) ++n_multi;
    if (s.scenario == Scenario::single) ++n_single;
    if (s.scenario == Scenario::none) ++n_none;
  }
  CHECK(std::abs(n_multi / 500.0 - cfg.mix_multi) <= 0.02);
  CHECK(std::abs(n_single / 500.0 - cfg.mix_single) <= 0.02);
  CHECK(std::abs(n_none / 500.0 - cfg.mix_none) <= 0.02);
}

TEST_CASE("generated annotations are internally consistent") {
  GenConfig cfg = small_cfg(408, 64);
  Dataset ds = generate_dataset(cfg);
  Vocab vocab = Vocab::from_tokens(builtin_vocab_tokens());
  for (const auto& s : ds.samples) {
    validate_sample(s, ds.meta);  // throws on any flag disagreement
    for (int t : s.tokens) {
      REQUIRE(t >= 0);
      REQUIRE(t < vocab.size());
    }
    long long sum = 0;
    for (int c : s.gt_counts) sum += c;
    switch (s.scenario) {
      case Scenario::none:
        CHECK(s.polarity == Polarity::negative);
        CHECK(s.gt_mask.empty());
        CHECK(sum == 0);
        break;
      case Scenario::single:
        CHECK(sum == 1);
        CHECK_FALSE(s.gt_mask.empty());
        break;
      case Scenario::multi: {
        int nonzero = 0, top = 0;
        for (int c : s.gt_counts)
          if (c > 0) {
            ++nonzero;
            top = c;
          }
        CHECK(nonzero == 1);
        CHECK(top >= 2);
        CHECK_FALSE(s.gt_mask.empty());
        break;
      }
    }
  }
}

TEST_CASE("group-reference masks re-evaluate to the category footprint") {
  GenConfig cfg = small_cfg(409, 64);
  Dataset ds = generate_dataset(cfg);
  int checked = 0;
  for (const auto& s : ds.samples) {
    if (s.scenario != Scenario::multi) continue;
    int cat = 0;
    for (std::size_t c = 0; c < s.gt_counts.size(); ++c)
      if (s.gt_counts[c] > 0) cat = static_cast<int>(c) + 1;
    // A group reference selects every cell of its category and nothing else.
    for (std::size_t i = 0; i < s.grid.size(); ++i)
      CHECK(int(s.gt_mask.data[i]) == (s.grid[i] == cat ? 1 : 0));
    ++checked;
  }
  CHECK(checked > 5);
}

TEST_CASE("single-reference masks cover cells of their category only") {
  GenConfig cfg = small_cfg(410, 64);
  Dataset ds = generate_dataset(cfg);
  int checked = 0;
  for (const auto& s : ds.samples) {
    if (s.scenario != Scenario::single) continue;
    int cat = 0;
    for (std::size_t c = 0; c < s.gt_counts.size(); ++c)
      if (s.gt_counts[c] > 0) cat = static_cast<int>(c) + 1;
    for (std::size_t i = 0; i < s.grid.size(); ++i)
      if (s.gt_mask.data[i]) CHECK(s.grid[i] == cat);
    ++checked;
  }
  CHECK(checked > 5);
}

TEST_CASE("a group reference to three circles counts exactly three") {
  detail::Scene scene = hand_scene(32, 32, 4,
                                   {{{1, 5, 5, 2}, {1, 15, 5, 2}, {1, 25, 5, 2}, {2, 15, 20, 3}}});
  GenConfig cfg;
  cfg.grid_h = 32;
  cfg.grid_w = 32;
  cfg.categories = 4;

  Rng rng(411);
  detail::Expression expr;
  REQUIRE(detail::make_multi(rng, scene, cfg, expr));
  REQUIRE(expr.counts.size() == 4);
  CHECK(expr.counts[0] == 3);
  CHECK(expr.counts[1] == 0);
  CHECK(expr.counts[2] == 0);
  CHECK(expr.counts[3] == 0);
  CHECK(expr.polarity == Polarity::positive);

  Mask want = detail::mask_of_category(scene, 32, 32, 1);
  CHECK(expr.mask.data == want.data);
  CHECK(expr.mask.area() == want.area());
  // Wording names the circle plural whichever phrasing was drawn.
  CHECK(expr.words.back() == "circles");
}

TEST_CASE("a scene with no group candidate cannot make a group reference") {
  detail::Scene scene = hand_scene(32, 32, 4, {{{1, 8, 8, 2}, {2, 20, 20, 3}}});
  GenConfig cfg;
  cfg.grid_h = 32;
  cfg.grid_w = 32;
  cfg.categories = 4;
  Rng rng(412);
  detail::Expression expr;
  CHECK_FALSE(detail::make_multi(rng, scene, cfg, expr));
}

TEST_CASE("no-target references always come back negative and empty") {
  detail::Scene scene = hand_scene(32, 32, 4, {{{1, 8, 8, 2}, {1, 20, 20, 3}}});
  GenConfig cfg;
  cfg.grid_h = 32;
  cfg.grid_w = 32;
  cfg.categories = 4;
  Rng rng(413);
  for (int t = 0; t < 20; ++t) {
    detail::Expression expr;
    REQUIRE(detail::make_none(rng, scene, cfg, expr));
    CHECK(expr.polarity == Polarity::negative);
    CHECK(expr.mask.empty());
    for (int c : expr.counts) CHECK(c == 0);
    CHECK_FALSE(expr.words.empty());
  }
}

TEST_CASE("wrong-count phrasing appears when every category is present") {
  // All categories occupied, so the absent-category branch is unavailable.
  detail::Scene scene = hand_scene(32, 32, 2, {{{1, 8, 8, 2}, {1, 20, 8, 2}, {2, 14, 22, 3}}});
  GenConfig cfg;
  cfg.grid_h = 32;
  cfg.grid_w = 32;
  cfg.categories = 2;
  Rng rng(414);
  for (int t = 0; t < 10; ++t) {
    detail::Expression expr;
    REQUIRE(detail::make_none(rng, scene, cfg, expr));
    CHECK(expr.mask.empty());
    REQUIRE(expr.words.size() == 3);
    CHECK(expr.words[0] == "the");
    // The stated count never matches the true instance count of the named
    // category (1 circle-category pair would be "two".."six" except the truth).
    bool circles = expr.words[2] == "circles";
    int truth = circles ? 2 : 1;
    const auto& cw = count_words();
    int stated = 0;
    for (int k = 1; k <= 6; ++k)
      if (cw[static_cast<std::size_t>(k)] == expr.words[1]) stated = k;
    REQUIRE(stated >= 2);
    CHECK(stated != truth);
  }
}

TEST_CASE("sample validation rejects inconsistent annotations") {
  DatasetMeta meta;
  meta.grid_h = 16;
  meta.grid_w = 16;
  meta.categories = 2;

  GresSample ok;
  ok.grid.assign(256, 0);
  ok.grid[0] = 1;
  ok.tokens = {1, 2};
  ok.gt_mask = Mask::zeros(16, 16);
  ok.gt_mask.data[0] = 1;
  ok.gt_counts = {1, 0};
  ok.gt_exist = 1;
  CHECK_NOTHROW(validate_sample(ok, meta));

  GresSample bad = ok;
  bad.gt_exist = 0;  // mask says present
  CHECK_THROWS_AS(validate_sample(bad, meta), FormatError);

  bad = ok;
  bad.gt_counts = {0, 0};  // counts say absent
  CHECK_THROWS_AS(validate_sample(bad, meta), FormatError);

  bad = ok;
  bad.gt_counts = {1};  // wrong arity
  CHECK_THROWS_AS(validate_sample(bad, meta), FormatError);

  bad = ok;
  bad.grid[3] = 7;  // cell id beyond the category range
  CHECK_THROWS_AS(validate_sample(bad, meta), FormatError);

  bad = ok;
  bad.tokens.clear();
  CHECK_THROWS_AS(validate_sample(bad, meta), FormatError);

  bad = ok;
  bad.scenario = Scenario::none;  // but positive polarity and nonempty mask
  CHECK_THROWS_AS(validate_sample(bad, meta), FormatError);
}

TEST_CASE("vocabulary construction and lookup enforce uniqueness") {
  Vocab v = Vocab::from_tokens({"a", "b", "c"});
  CHECK(v.id("b") == 1);
  CHECK(v.size() == 3);
  CHECK_THROWS_AS(v.id("missing"), VocabError);
  CHECK_THROWS_AS(Vocab::from_tokens({"a", "b", "a"}), VocabError);
}

TEST_CASE("the builtin vocabulary covers every emitted word") {
  Vocab v = Vocab::from_tokens(builtin_vocab_tokens());
  CHECK(v.size() == 45);
  CHECK(v.id("<pad>") == 0);
  for (const auto& n : shape_names()) CHECK_NOTHROW(v.id(n));
  for (const auto& n : shape_plurals()) CHECK_NOTHROW(v.id(n));
  for (const char* w : {"the", "all", "two", "six", "small", "large", "leftmost", "purple"})
    CHECK_NOTHROW(v.id(w));
}

TEST_CASE("dataset parsing surfaces malformed payloads as format errors") {
  CHECK_THROWS_AS(dataset_from_json(json::parse(R"({"samples": []})")), FormatError);
  json j = dataset_to_json(generate_dataset(small_cfg(415, 2)));
  j["samples"][0]["mask_rle"] = {3};  // run total no longer matches the grid
  CHECK_THROWS_AS(dataset_from_json(j), FormatError);
  j = dataset_to_json(generate_dataset(small_cfg(415, 2)));
  j["samples"][0]["polarity"] = "sideways";
  CHECK_THROWS_AS(dataset_from_json(j), FormatError);
}

TEST_CASE("generator configuration is validated up front") {
  GenConfig cfg = small_cfg(416);
  cfg.grid_h = 12;  // not divisible by 8 and below the minimum
  CHECK_THROWS_AS(generate_dataset(cfg), ConfigError);
  cfg = small_cfg(416);
  cfg.min_instances = 1;
  CHECK_THROWS_AS(generate_dataset(cfg), ConfigError);
  cfg = small_cfg(416);
  cfg.mix_none = 0.5;  // mix no longer sums to one
  CHECK_THROWS_AS(generate_dataset(cfg), ConfigError);
  cfg = small_cfg(416);
  cfg.categories = 99;
  CHECK_THROWS_AS(generate_dataset(cfg), ConfigError);
}
