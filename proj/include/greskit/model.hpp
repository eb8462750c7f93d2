#pragma once

#include <string>
#include <vector>

#include "greskit/aggregation.hpp"
#include "greskit/counting.hpp"
#include "greskit/decoder.hpp"
#include "greskit/encoders.hpp"
#include "greskit/losses.hpp"
#include "greskit/mask.hpp"

namespace greskit {

struct ModelConfig {
  int d = 32;
  int n_heads = 4;
  int sdm_layers = 3;
  Upsample upsample = Upsample::bilinear;
  MaskKernel kernel = MaskKernel::pooled;
  React react = React::concat_linear;
  bool mha_residual = true;
  TokenReduce token_reduce = TokenReduce::sum;
  int categories = 4;
  int max_len = 20;
  int reduction_ratio = 4;
  int grid_h = 32, grid_w = 32;
  int text_vocab = 0;  // filled in from the vocabulary manifest
  int pad_id = 0;

  // Ablation switches.
  bool hsd_off = false;         // decode the finest map directly, no aggregation
  bool aoc_off = false;         // no counting branch; existence reads pooled queries
  bool aoc_binary_only = false; // counting dropped, existence reads pooled queries
  bool intra_off = false;       // token gates pinned to 1
  bool inter_off = false;       // level gates pinned to 1
  bool deep_supervision = false;  // auxiliary mask losses on intermediate stages

  int n_tokens() const { return max_len + 1; }
  int cell_vocab() const { return categories + 1; }
  bool counting_enabled() const { return !aoc_off && !aoc_binary_only; }

  void validate() const {
    if (d <= 0 || n_heads <= 0 || d % n_heads)
      throw ConfigError("model: D must be positive and divisible by n_heads");
    if (sdm_layers < 1) throw ConfigError("model: sdm_layers must be >= 1");
    if (categories < 1) throw ConfigError("model: need at least one category");
    if (max_len < 1) throw ConfigError("model: max_len must be >= 1");
    if (reduction_ratio < 1) throw ConfigError("model: reduction_ratio must be >= 1");
    if (grid_h < 8 || grid_w < 8 || grid_h % 8 || grid_w % 8)
      throw ConfigError("model: grid sides must be positive multiples of 8");
    if (text_vocab < 2) throw ConfigError("model: text vocabulary is not set");
    if (pad_id < 0 || pad_id >= text_vocab) throw ConfigError("model: pad id outside vocabulary");
    if (aoc_off && aoc_binary_only)
      throw ConfigError("model: aoc_off and aoc_binary_only are mutually exclusive");
  }
};

// Pyramid level consumed by each cascade stage (0 = coarsest). Stacks
// shallower than the pyramid start at the matching depth so the final stage
// always sees the finest level; deeper stacks repeat the finest level.
inline std::vector<int> cascade_levels(int sdm_layers) {
  if (sdm_layers < 1) throw ConfigError("cascade_levels: need at least one stage");
  int np = static_cast<int>(pyramid_strides().size());
  std::vector<int> lv;
  for (int i = std::max(0, np - sdm_layers); i < np; ++i) lv.push_back(i);
  while (static_cast<int>(lv.size()) < sdm_layers) lv.push_back(np - 1);
  return lv;
}

inline LevelDims level_dims_for(const ModelConfig& cfg, int level) {
  int s = pyramid_strides().at(static_cast<std::size_t>(level));
  return {cfg.grid_h / s, cfg.grid_w / s};
}

template <typename T>
SdmOptions sdm_options(const ModelConfig& cfg) {
  return SdmOptions{cfg.n_heads, cfg.mha_residual, cfg.react};
}

template <typename T>
DhaOptions dha_options(const ModelConfig& cfg) {
  DhaOptions opt;
  opt.mode = cfg.upsample;
  opt.kernel = cfg.kernel;
  opt.intra_off = cfg.intra_off;
  opt.inter_off = cfg.inter_off;
  return opt;
}

template <typename T>
ParamStore<T> init_params(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ParamStore<T> store;
  register_visual_encoder(store, rng, cfg.cell_vocab(), cfg.d);
  register_language_encoder(store, rng, cfg.text_vocab, cfg.d);

  auto levels = cascade_levels(cfg.sdm_layers);
  SdmOptions sopt = sdm_options<T>(cfg);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    LevelDims dims = level_dims_for(cfg, levels[i]);
    register_sdm(store, rng, "sdm." + std::to_string(i), cfg.d, dims.h * dims.w, sopt);
  }

  int n = cfg.n_tokens();
  if (!cfg.hsd_off) {
    register_linear(store, rng, "dha.gate", cfg.d, 1, true);
    int hidden = std::max(1, (n + cfg.reduction_ratio - 1) / cfg.reduction_ratio);
    for (std::size_t i = 0; i < levels.size(); ++i) {
      std::string p = "dha.intra." + std::to_string(i);
      register_linear(store, rng, p + ".fc1", n, hidden, true);
      register_linear(store, rng, p + ".fc2", hidden, n, true);
    }
  }
  if (cfg.kernel == MaskKernel::pooled)
    register_mlp(store, rng, "dha.kernel", {cfg.d, cfg.d, 2 * n});
  else
    register_mlp(store, rng, "dha.kernel", {cfg.d, cfg.d, 2});

  if (cfg.counting_enabled())
    register_aoc(store, rng, cfg.d, cfg.categories, static_cast<int>(levels.size()));
  else
    register_exist_on_queries(store, rng, cfg.d);
  return store;
}

template <typename T>
struct ForwardOut {
  Var<T> mask_logits;  // [grid_h*grid_w x 2]
  std::vector<LevelBundle<T>> bundles;
  std::vector<Var<T>> queries;  // refined query set per stage
  std::vector<Var<T>> alphas;   // per-stage level gates (empty when hsd_off)
  std::vector<Var<T>> gates;    // per-stage token gates (empty when intra off)
  bool has_count = false;
  CountPrediction<T> count;
  Var<T> exist_logits;
};

// Pads token ids to max_len so the token count (and the intra-selection
// parameter shapes) stay constant across expressions.
inline std::vector<int> pad_tokens(const std::vector<int>& tokens, int max_len, int pad_id) {
  std::vector<int> out = tokens;
  if (static_cast<int>(out.size()) > max_len)
    throw InputError("pad_tokens: expression longer than max_len");
  out.resize(static_cast<std::size_t>(max_len), pad_id);
  return out;
}

template <typename T>
ForwardOut<T> model_forward(ParamCtx<T>& ctx, const ModelConfig& cfg,
                            const std::vector<int>& grid, const std::vector<int>& tokens) {
  VisualFeatures<T> vis = encode_image(ctx, grid, cfg.grid_h, cfg.grid_w, cfg.cell_vocab());
  LanguageFeatures<T> lang =
      encode_text(ctx, pad_tokens(tokens, cfg.max_len, cfg.pad_id), cfg.text_vocab, cfg.max_len);

  ForwardOut<T> out;
  auto levels = cascade_levels(cfg.sdm_layers);
  SdmOptions sopt = sdm_options<T>(cfg);
  Var<T> q = lang.queries;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    SdmOut<T> stage = run_level(ctx, "sdm." + std::to_string(i), q, vis.levels[levels[i]],
                                lang.queries, sopt);
    out.bundles.push_back({stage.semantic, stage.query, vis.dims[levels[i]]});
    out.queries.push_back(stage.query);
    q = stage.query;
  }

  DhaOptions dopt = dha_options<T>(cfg);
  Var<T> m_star;
  LevelDims mdims;
  if (cfg.hsd_off) {
    m_star = out.bundles.back().map;
    mdims = out.bundles.back().dims;
  } else {
    AggOut<T> agg = aggregate(ctx, out.bundles, dopt);
    m_star = agg.m_star;
    mdims = agg.dims;
    out.alphas = agg.alphas;
    out.gates = agg.gates;
  }
  out.mask_logits =
      decode_mask(ctx, m_star, out.queries.back(), mdims, cfg.grid_h, cfg.grid_w, dopt);

  if (cfg.counting_enabled()) {
    out.count = count_forward(ctx, out.queries, cfg.token_reduce, /*detach_exist=*/true);
    out.exist_logits = out.count.exist_logits;
    out.has_count = true;
  } else {
    out.exist_logits = exist_from_queries(ctx, out.queries.back());
  }
  return out;
}

template <typename T>
struct SampleLoss {
  Var<T> mask, count, exist, total;
};

template <typename T>
SampleLoss<T> compute_losses(ParamCtx<T>& ctx, const ModelConfig& cfg, const LossWeights& w,
                             const ForwardOut<T>& fo, const Mask& gt_mask,
                             const std::vector<int>& gt_counts, int gt_exist) {
  SampleLoss<T> out;
  out.mask = mask_loss(ctx, fo.mask_logits, gt_mask);
  if (cfg.deep_supervision) {
    // Auxiliary decoding of every intermediate stage, averaged into the
    // mask term.
    DhaOptions dopt = dha_options<T>(cfg);
    Var<T> acc = out.mask;
    for (std::size_t i = 0; i + 1 < fo.bundles.size(); ++i) {
      Var<T> aux = decode_mask(ctx, fo.bundles[i].map, fo.queries[i], fo.bundles[i].dims,
                               cfg.grid_h, cfg.grid_w, dopt);
      acc = add(acc, mask_loss(ctx, aux, gt_mask));
    }
    out.mask = scale(acc, T(1) / static_cast<T>(fo.bundles.size()));
  }
  if (fo.has_count) {
    out.count = count_loss(ctx, fo.count.pred, gt_counts);
  } else {
    out.count = ctx.tape().constant(Tensor<T>({1}));
  }
  out.exist = existence_loss(ctx, fo.exist_logits, gt_exist);
  out.total = total_loss(ctx, out.mask, out.count, out.exist, w);
  return out;
}

// Inference decision rule: existence head arbitrates emptiness; a declared
// empty target yields an all-background mask, otherwise per-pixel argmax.
template <typename T>
Mask decode_prediction(const Tensor<T>& mask_logits, const Tensor<T>& exist_logits, int h, int w,
                       bool* pred_empty_out = nullptr) {
  if (mask_logits.rank() != 2 || mask_logits.cols() != 2 || mask_logits.rows() != h * w)
    throw ShapeError("decode_prediction: bad mask logits shape");
  if (exist_logits.numel() != 2) throw ShapeError("decode_prediction: bad existence logits");
  bool empty = exist_logits[0] >= exist_logits[1];
  Mask m = Mask::zeros(h, w);
  if (!empty)
    for (int i = 0; i < h * w; ++i)
      m.data[static_cast<std::size_t>(i)] =
          mask_logits.at(i, 1) > mask_logits.at(i, 0) ? 1 : 0;
  if (pred_empty_out) *pred_empty_out = empty;
  return m;
}

}  // namespace greskit
