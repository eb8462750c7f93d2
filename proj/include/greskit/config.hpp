#pragma once

#include <set>
#include <string>

#include <json.hpp>

#include "greskit/generator.hpp"
#include "greskit/losses.hpp"
#include "greskit/model.hpp"

namespace greskit {

enum class LrSchedule { cosine, constant };

struct OptimConfig {
  double lr = 1e-3;
  double weight_decay = 0.05;
  LrSchedule schedule = LrSchedule::cosine;
  int steps = 2000;
  int batch = 8;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("optim: lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("optim: weight_decay must be nonnegative");
    if (steps < 0) throw ConfigError("optim: steps must be nonnegative");
    if (batch < 1) throw ConfigError("optim: batch must be >= 1");
  }
};

struct RunConfig {
  ModelConfig model;
  LossWeights loss;
  OptimConfig optim;
  std::string data_path = "data";
  std::uint64_t seed = 0;
  GenConfig gen;
  std::vector<std::string> ablate_axes;
};

namespace detail {

inline void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void read_into(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad value for '") + key + "'");
  }
}

inline Upsample upsample_from(const std::string& s) {
  if (s == "bilinear") return Upsample::bilinear;
  if (s == "nearest") return Upsample::nearest;
  throw ConfigError("config: upsample_mode must be 'bilinear' or 'nearest'");
}

inline MaskKernel kernel_from(const std::string& s) {
  if (s == "pooled") return MaskKernel::pooled;
  if (s == "per_token") return MaskKernel::per_token;
  throw ConfigError("config: kernel must be 'pooled' or 'per_token'");
}

inline React react_from(const std::string& s) {
  if (s == "concat_linear") return React::concat_linear;
  if (s == "add") return React::add;
  if (s == "cross_attn") return React::cross_attn;
  throw ConfigError("config: react must be 'concat_linear', 'add', or 'cross_attn'");
}

inline TokenReduce reduce_from(const std::string& s) {
  if (s == "sum") return TokenReduce::sum;
  if (s == "mean") return TokenReduce::mean;
  throw ConfigError("config: token_reduce must be 'sum' or 'mean'");
}

inline LrSchedule schedule_from(const std::string& s) {
  if (s == "cosine") return LrSchedule::cosine;
  if (s == "constant") return LrSchedule::constant;
  throw ConfigError("config: schedule must be 'cosine' or 'constant'");
}

inline void parse_model(const json& j, ModelConfig& m) {
  reject_unknown_keys(j,
                      {"D", "n_heads", "sdm_layers", "upsample_mode", "kernel", "react",
                       "mha_residual", "token_reduce"},
                      "model");
  read_into(j, "D", m.d);
  read_into(j, "n_heads", m.n_heads);
  read_into(j, "sdm_layers", m.sdm_layers);
  if (j.contains("upsample_mode"))
    m.upsample = upsample_from(j.at("upsample_mode").get<std::string>());
  if (j.contains("kernel")) m.kernel = kernel_from(j.at("kernel").get<std::string>());
  if (j.contains("react")) m.react = react_from(j.at("react").get<std::string>());
  read_into(j, "mha_residual", m.mha_residual);
  if (j.contains("token_reduce"))
    m.token_reduce = reduce_from(j.at("token_reduce").get<std::string>());
  // Full validation happens once dataset-derived extents are known; check
  // the architecture knobs that stand on their own here.
  if (m.d < 1) throw ConfigError("config: D must be >= 1");
  if (m.sdm_layers < 1 || m.sdm_layers > 4)
    throw ConfigError("config: sdm_layers must be in 1..4");
  if (m.n_heads < 1 || m.d % m.n_heads != 0)
    throw ConfigError("config: n_heads must divide D");
}

inline void parse_loss(const json& j, LossWeights& w) {
  reject_unknown_keys(j, {"lambda_mask", "lambda_count", "lambda_exist"}, "loss");
  read_into(j, "lambda_mask", w.lambda_mask);
  read_into(j, "lambda_count", w.lambda_count);
  read_into(j, "lambda_exist", w.lambda_exist);
  if (w.lambda_mask < 0 || w.lambda_count < 0 || w.lambda_exist < 0)
    throw ConfigError("config: loss weights must be nonnegative");
}

inline void parse_optim(const json& j, OptimConfig& o) {
  reject_unknown_keys(j, {"lr", "weight_decay", "schedule", "steps", "batch"}, "optim");
  read_into(j, "lr", o.lr);
  read_into(j, "weight_decay", o.weight_decay);
  if (j.contains("schedule")) o.schedule = schedule_from(j.at("schedule").get<std::string>());
  read_into(j, "steps", o.steps);
  read_into(j, "batch", o.batch);
  o.validate();
}

inline void parse_gen(const json& j, GenConfig& g) {
  reject_unknown_keys(j,
                      {"n_images", "grid_hw", "C", "instances_per_image", "expr_per_image",
                       "scenario_mix", "seed"},
                      "gen");
  read_into(j, "n_images", g.n_images);
  if (j.contains("grid_hw")) {
    const auto& hw = j.at("grid_hw");
    if (!hw.is_array() || hw.size() != 2)
      throw ConfigError("config: grid_hw must be a [H, W] pair");
    g.grid_h = hw.at(0).get<int>();
    g.grid_w = hw.at(1).get<int>();
  }
  read_into(j, "C", g.categories);
  if (j.contains("instances_per_image")) {
    const auto& r = j.at("instances_per_image");
    if (!r.is_array() || r.size() != 2)
      throw ConfigError("config: instances_per_image must be a [min, max] pair");
    g.min_instances = r.at(0).get<int>();
    g.max_instances = r.at(1).get<int>();
  }
  read_into(j, "expr_per_image", g.expr_per_image);
  if (j.contains("scenario_mix")) {
    const auto& m = j.at("scenario_mix");
    reject_unknown_keys(m, {"multi", "single", "none"}, "gen.scenario_mix");
    read_into(m, "multi", g.mix_multi);
    read_into(m, "single", g.mix_single);
    read_into(m, "none", g.mix_none);
  }
  read_into(j, "seed", g.seed);
}

}  // namespace detail

inline RunConfig parse_config(const json& j) {
  detail::reject_unknown_keys(j, {"model", "loss", "optim", "data", "seed", "gen", "ablate"},
                              "top level");
  RunConfig cfg;
  if (j.contains("model")) detail::parse_model(j.at("model"), cfg.model);
  if (j.contains("loss")) detail::parse_loss(j.at("loss"), cfg.loss);
  if (j.contains("optim")) detail::parse_optim(j.at("optim"), cfg.optim);
  if (j.contains("data")) {
    detail::reject_unknown_keys(j.at("data"), {"path"}, "data");
    detail::read_into(j.at("data"), "path", cfg.data_path);
  }
  detail::read_into(j, "seed", cfg.seed);
  if (j.contains("gen")) {
    detail::parse_gen(j.at("gen"), cfg.gen);
    cfg.gen.seed = cfg.seed;  // one seed governs the whole run unless gen overrides
    if (j.at("gen").contains("seed")) cfg.gen.seed = j.at("gen").at("seed").get<std::uint64_t>();
  }
  if (j.contains("ablate")) {
    detail::reject_unknown_keys(j.at("ablate"), {"axes"}, "ablate");
    detail::read_into(j.at("ablate"), "axes", cfg.ablate_axes);
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: invalid json: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace greskit
