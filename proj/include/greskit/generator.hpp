#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "greskit/dataset.hpp"
#include "greskit/rng.hpp"

namespace greskit {

// Shape stencils drawn onto the occupancy grid. All are solid enough to
// survive coarse pooling; index order fixes the category id assignment.
inline const std::vector<std::string>& shape_names() {
  static const std::vector<std::string> names = {
      "circle", "square", "triangle", "diamond", "cross",  "ring",
      "bar",    "post",   "corner",   "tee",     "arrow",  "stripe"};
  return names;
}

inline const std::vector<std::string>& shape_plurals() {
  static const std::vector<std::string> names = {
      "circles", "squares", "triangles", "diamonds", "crosses", "rings",
      "bars",    "posts",   "corners",   "tees",     "arrows",  "stripes"};
  return names;
}

inline bool stencil_hit(int shape, int dx, int dy, int r) {
  switch (shape) {
    case 0:  // circle
      return dx * dx + dy * dy <= r * r;
    case 1:  // square
      return std::abs(dx) <= r && std::abs(dy) <= r;
    case 2:  // triangle, apex up
      return dy >= -r && dy <= r && std::abs(dx) * 2 <= dy + r;
    case 3:  // diamond
      return std::abs(dx) + std::abs(dy) <= r;
    case 4:  // cross
      return (std::abs(dx) <= r / 2 && std::abs(dy) <= r) ||
             (std::abs(dy) <= r / 2 && std::abs(dx) <= r);
    case 5:  // ring
      return dx * dx + dy * dy <= r * r && dx * dx + dy * dy >= (r - 1) * (r - 1) / 2;
    case 6:  // bar, horizontal
      return std::abs(dy) <= r / 2 && std::abs(dx) <= r;
    case 7:  // post, vertical
      return std::abs(dx) <= r / 2 && std::abs(dy) <= r;
    case 8:  // corner
      return std::abs(dx) <= r && std::abs(dy) <= r && (dx <= -r / 2 || dy >= r / 2);
    case 9:  // tee
      return (dy <= -r / 2 && std::abs(dx) <= r && dy >= -r) ||
             (std::abs(dx) <= r / 2 && std::abs(dy) <= r);
    case 10:  // arrow, pointing right
      return (std::abs(dy) <= r / 2 && dx >= -r && dx <= 0) ||
             (dx >= 0 && dx <= r && std::abs(dy) <= r - dx);
    case 11:  // stripe, diagonal
      return std::abs(dx - dy) <= r / 2 && std::abs(dx) <= r && std::abs(dy) <= r;
    default:
      throw ConfigError("stencil: shape id out of range");
  }
}

struct Instance {
  int category = 0;  // 1-based cell id
  int cx = 0, cy = 0;
  int r = 0;  // 2 = small, 3 = large
  std::vector<int> cells;  // flat indices covered
};

struct GenConfig {
  int n_images = 64;
  int grid_h = 32, grid_w = 32;
  int categories = 4;
  int min_instances = 2, max_instances = 4;
  int expr_per_image = 1;
  double mix_multi = 0.4, mix_single = 0.4, mix_none = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_images <= 0) throw ConfigError("gen: n_images must be positive");
    if (grid_h < 16 || grid_w < 16 || grid_h % 8 != 0 || grid_w % 8 != 0)
      throw ConfigError("gen: grid extents must be >=16 and divisible by 8");
    if (categories < 1 || categories > static_cast<int>(shape_names().size()))
      throw ConfigError("gen: categories out of supported range");
    if (min_instances < 2 || max_instances < min_instances)
      throw ConfigError("gen: need min_instances >= 2 and max >= min");
    if (expr_per_image < 1) throw ConfigError("gen: expr_per_image must be >= 1");
    double mix = mix_multi + mix_single + mix_none;
    if (mix_multi < 0 || mix_single < 0 || mix_none < 0 || std::abs(mix - 1.0) > 1e-9)
      throw ConfigError("gen: scenario mix must be nonnegative and sum to 1");
  }
};

inline const std::vector<std::string>& builtin_vocab_tokens() {
  static const std::vector<std::string> toks = [] {
    std::vector<std::string> v = {"<pad>", "the",  "all",       "one",       "two",
                                  "three", "four", "five",      "six",       "red",
                                  "green", "blue", "yellow",    "orange",    "purple",
                                  "small", "large", "leftmost", "rightmost", "topmost",
                                  "bottommost"};
    for (const auto& n : shape_names()) v.push_back(n);
    for (const auto& n : shape_plurals()) v.push_back(n);
    return v;
  }();
  return toks;
}

inline const std::vector<std::string>& count_words() {
  static const std::vector<std::string> w = {"", "one", "two", "three", "four", "five", "six"};
  return w;
}

namespace detail {

inline std::vector<int> stencil_cells(int shape, int cx, int cy, int r, int h, int w) {
  std::vector<int> cells;
  for (int dy = -r; dy <= r; ++dy)
    for (int dx = -r; dx <= r; ++dx) {
      int x = cx + dx, y = cy + dy;
      if (x < 0 || x >= w || y < 0 || y >= h) continue;
      if (stencil_hit(shape, dx, dy, r)) cells.push_back(y * w + x);
    }
  return cells;
}

inline bool place_instance(Rng& rng, std::vector<int>& grid, int h, int w, int category,
                           Instance& out) {
  for (int attempt = 0; attempt < 60; ++attempt) {
    int r = rng.bernoulli(0.5) ? 3 : 2;
    int cx = rng.uniform_int(r, w - 1 - r);
    int cy = rng.uniform_int(r, h - 1 - r);
    auto cells = stencil_cells(category - 1, cx, cy, r, h, w);
    bool clear = true;
    for (int c : cells)
      if (grid[static_cast<std::size_t>(c)] != 0) { clear = false; break; }
    if (!clear || cells.empty()) continue;
    for (int c : cells) grid[static_cast<std::size_t>(c)] = category;
    out = Instance{category, cx, cy, r, std::move(cells)};
    return true;
  }
  return false;
}

struct Scene {
  std::vector<int> grid;
  std::vector<Instance> instances;
  std::vector<int> per_category;  // instance counts indexed by category-1
};

inline Scene build_scene(std::uint64_t seed, int image_id, const GenConfig& cfg) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(image_id)));
  Scene scene;
  scene.grid.assign(static_cast<std::size_t>(cfg.grid_h * cfg.grid_w), 0);
  scene.per_category.assign(static_cast<std::size_t>(cfg.categories), 0);
  int target = rng.uniform_int(cfg.min_instances, cfg.max_instances);
  int shared = rng.uniform_int(1, cfg.categories);
  for (int i = 0; i < target; ++i) {
    // Guarantee at least one repeated category so group references exist.
    int cat = i < 2 ? shared : rng.uniform_int(1, cfg.categories);
    Instance inst;
    if (!place_instance(rng, scene.grid, cfg.grid_h, cfg.grid_w, cat, inst)) continue;
    scene.per_category[static_cast<std::size_t>(cat - 1)]++;
    scene.instances.push_back(std::move(inst));
  }
  return scene;
}

inline Mask mask_of_category(const Scene& scene, int h, int w, int category) {
  Mask m = Mask::zeros(h, w);
  for (std::size_t i = 0; i < scene.grid.size(); ++i)
    if (scene.grid[i] == category) m.data[i] = 1;
  return m;
}

inline Mask mask_of_instance(const Instance& inst, int h, int w) {
  Mask m = Mask::zeros(h, w);
  for (int c : inst.cells) m.data[static_cast<std::size_t>(c)] = 1;
  return m;
}

struct Expression {
  std::vector<std::string> words;
  Mask mask;
  std::vector<int> counts;
  Polarity polarity = Polarity::positive;
};

// Multi-target reference: all instances of one category present >= 2 times.
inline bool make_multi(Rng& rng, const Scene& scene, const GenConfig& cfg, Expression& out) {
  std::vector<int> cands;
  for (int c = 1; c <= cfg.categories; ++c)
    if (scene.per_category[static_cast<std::size_t>(c - 1)] >= 2) cands.push_back(c);
  if (cands.empty()) return false;
  int cat = cands[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(cands.size()) - 1))];
  int k = scene.per_category[static_cast<std::size_t>(cat - 1)];
  const std::string& pl = shape_plurals()[static_cast<std::size_t>(cat - 1)];
  if (rng.bernoulli(0.5) || k > 6) {
    out.words = {"all", pl};
  } else {
    out.words = {"the", count_words()[static_cast<std::size_t>(k)], pl};
  }
  out.mask = mask_of_category(scene, cfg.grid_h, cfg.grid_w, cat);
  out.counts.assign(static_cast<std::size_t>(cfg.categories), 0);
  out.counts[static_cast<std::size_t>(cat - 1)] = k;
  out.polarity = Polarity::positive;
  return true;
}

// Single-target reference: unique category, spatial extremum, or unique size.
inline bool make_single(Rng& rng, const Scene& scene, const GenConfig& cfg, Expression& out) {
  auto finish = [&](const Instance& inst, std::vector<std::string> words) {
    out.words = std::move(words);
    out.mask = mask_of_instance(inst, cfg.grid_h, cfg.grid_w);
    out.counts.assign(static_cast<std::size_t>(cfg.categories), 0);
    out.counts[static_cast<std::size_t>(inst.category - 1)] = 1;
    out.polarity = Polarity::positive;
    return true;
  };
  int mode = rng.uniform_int(0, 2);
  for (int probe = 0; probe < 3; ++probe, mode = (mode + 1) % 3) {
    if (mode == 0) {
      std::vector<const Instance*> uniq;
      for (const auto& inst : scene.instances)
        if (scene.per_category[static_cast<std::size_t>(inst.category - 1)] == 1)
          uniq.push_back(&inst);
      if (uniq.empty()) continue;
      const Instance* pick =
          uniq[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(uniq.size()) - 1))];
      return finish(*pick, {"the", shape_names()[static_cast<std::size_t>(pick->category - 1)]});
    }
    if (mode == 1) {
      if (scene.instances.empty()) continue;
      static const char* dirs[] = {"leftmost", "rightmost", "topmost", "bottommost"};
      int d = rng.uniform_int(0, 3);
      auto key = [&](const Instance& i) {
        switch (d) {
          case 0: return -i.cx;
          case 1: return i.cx;
          case 2: return -i.cy;
          default: return i.cy;
        }
      };
      const Instance* best = &scene.instances[0];
      bool tie = false;
      for (std::size_t i = 1; i < scene.instances.size(); ++i) {
        int k = key(scene.instances[i]), kb = key(*best);
        if (k > kb) { best = &scene.instances[i]; tie = false; }
        else if (k == kb) tie = true;
      }
      if (tie) continue;  // ambiguous extremum, try another mode
      return finish(*best,
                    {"the", dirs[d], shape_names()[static_cast<std::size_t>(best->category - 1)]});
    }
    // mode 2: size unique within its category
    std::vector<const Instance*> cands;
    for (const auto& inst : scene.instances) {
      int same_cat_same_size = 0;
      for (const auto& other : scene.instances)
        if (other.category == inst.category && (other.r == inst.r)) same_cat_same_size++;
      int cat_total = scene.per_category[static_cast<std::size_t>(inst.category - 1)];
      if (same_cat_same_size == 1 && cat_total >= 2) cands.push_back(&inst);
    }
    if (cands.empty()) continue;
    const Instance* pick =
        cands[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(cands.size()) - 1))];
    return finish(*pick, {"the", pick->r >= 3 ? "large" : "small",
                          shape_names()[static_cast<std::size_t>(pick->category - 1)]});
  }
  return false;
}

// No-target reference: absent category, or wrong-count phrasing of a present one.
inline bool make_none(Rng& rng, const Scene& scene, const GenConfig& cfg, Expression& out) {
  out.mask = Mask::zeros(cfg.grid_h, cfg.grid_w);
  out.counts.assign(static_cast<std::size_t>(cfg.categories), 0);
  out.polarity = Polarity::negative;
  std::vector<int> absent;
  for (int c = 1; c <= cfg.categories; ++c)
    if (scene.per_category[static_cast<std::size_t>(c - 1)] == 0) absent.push_back(c);
  if (!absent.empty() && rng.bernoulli(0.7)) {
    int cat =
        absent[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(absent.size()) - 1))];
    if (rng.bernoulli(0.3)) {
      // Deceptive color modifier: grids carry no color, so always a miss.
      static const char* colors[] = {"red", "green", "blue", "yellow", "orange", "purple"};
      out.words = {"the", colors[rng.uniform_int(0, 5)],
                   shape_names()[static_cast<std::size_t>(cat - 1)]};
    } else {
      out.words = {"the", shape_names()[static_cast<std::size_t>(cat - 1)]};
    }
    return true;
  }
  std::vector<int> present;
  for (int c = 1; c <= cfg.categories; ++c)
    if (scene.per_category[static_cast<std::size_t>(c - 1)] > 0) present.push_back(c);
  if (present.empty()) return false;
  int cat =
      present[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(present.size()) - 1))];
  int k = scene.per_category[static_cast<std::size_t>(cat - 1)];
  std::vector<int> wrong;
  for (int j = 2; j <= 6; ++j)
    if (j != k) wrong.push_back(j);
  int j = wrong[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(wrong.size()) - 1))];
  out.words = {"the", count_words()[static_cast<std::size_t>(j)],
               shape_plurals()[static_cast<std::size_t>(cat - 1)]};
  return true;
}

}  // namespace detail

// Scenario quota assignment: floor of each share, remainders to the largest
// fractional parts, then a seeded shuffle decides which sample gets which.
inline std::vector<Scenario> scenario_plan(const GenConfig& cfg, Rng& rng) {
  int total = cfg.n_images * cfg.expr_per_image;
  double shares[3] = {cfg.mix_multi, cfg.mix_single, cfg.mix_none};
  int counts[3];
  double fracts[3];
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    double exact = shares[i] * total;
    counts[i] = static_cast<int>(std::floor(exact));
    fracts[i] = exact - counts[i];
    assigned += counts[i];
  }
  while (assigned < total) {
    int best = 0;
    for (int i = 1; i < 3; ++i)
      if (fracts[i] > fracts[best]) best = i;
    counts[best]++;
    fracts[best] = -1.0;
    ++assigned;
  }
  std::vector<Scenario> plan;
  plan.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < counts[0]; ++i) plan.push_back(Scenario::multi);
  for (int i = 0; i < counts[1]; ++i) plan.push_back(Scenario::single);
  for (int i = 0; i < counts[2]; ++i) plan.push_back(Scenario::none);
  rng.shuffle(plan.begin(), plan.end());
  return plan;
}

inline Dataset generate_dataset(const GenConfig& cfg) {
  cfg.validate();
  Vocab vocab = Vocab::from_tokens(builtin_vocab_tokens());
  Dataset ds;
  ds.meta.grid_h = cfg.grid_h;
  ds.meta.grid_w = cfg.grid_w;
  ds.meta.categories = cfg.categories;
  ds.meta.seed = cfg.seed;

  Rng master(derive_seed(cfg.seed, 0x9e3779b97f4a7c15ull));
  std::vector<Scenario> plan = scenario_plan(cfg, master);

  int sample_id = 0;
  for (int img = 0; img < cfg.n_images; ++img) {
    detail::Scene scene = detail::build_scene(cfg.seed, img, cfg);
    Rng expr_rng(derive_seed(cfg.seed, 0x51ed2701ull + static_cast<std::uint64_t>(img)));
    for (int e = 0; e < cfg.expr_per_image; ++e) {
      Scenario want = plan[static_cast<std::size_t>(sample_id)];
      detail::Expression expr;
      bool ok = false;
      Scenario got = want;
      // Fall through deterministically when the scene can't support the plan.
      for (int probe = 0; probe < 3 && !ok; ++probe) {
        switch (got) {
          case Scenario::multi: ok = detail::make_multi(expr_rng, scene, cfg, expr); break;
          case Scenario::single: ok = detail::make_single(expr_rng, scene, cfg, expr); break;
          case Scenario::none: ok = detail::make_none(expr_rng, scene, cfg, expr); break;
        }
        if (!ok)
          got = got == Scenario::multi ? Scenario::single
                : got == Scenario::single ? Scenario::none
                                          : Scenario::multi;
      }
      if (!ok) throw NumericError("gen: scene yielded no expressible reference");

      GresSample s;
      s.image_id = img;
      s.grid = scene.grid;
      s.tokens.reserve(expr.words.size());
      for (const auto& w : expr.words) s.tokens.push_back(vocab.id(w));
      s.gt_mask = std::move(expr.mask);
      s.gt_counts = std::move(expr.counts);
      s.gt_exist = s.gt_mask.empty() ? 0 : 1;
      s.polarity = expr.polarity;
      s.scenario = got;
      validate_sample(s, ds.meta);
      ds.samples.push_back(std::move(s));
      ++sample_id;
    }
  }
  return ds;
}

}  // namespace greskit
