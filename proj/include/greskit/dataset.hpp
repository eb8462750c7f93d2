#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "greskit/mask.hpp"
#include "greskit/metrics.hpp"

namespace greskit {

using json = nlohmann::ordered_json;

enum class Scenario { multi, single, none };

inline std::string to_string(Scenario s) {
  switch (s) {
    case Scenario::multi: return "multi";
    case Scenario::single: return "single";
    case Scenario::none: return "none";
  }
  throw FormatError("unknown scenario");
}

inline Scenario scenario_from(const std::string& s) {
  if (s == "multi") return Scenario::multi;
  if (s == "single") return Scenario::single;
  if (s == "none") return Scenario::none;
  throw FormatError("unknown scenario '" + s + "'");
}

inline std::string to_string(Polarity p) {
  return p == Polarity::positive ? "positive" : "negative";
}

inline Polarity polarity_from(const std::string& s) {
  if (s == "positive") return Polarity::positive;
  if (s == "negative") return Polarity::negative;
  throw FormatError("unknown polarity '" + s + "'");
}

struct Vocab {
  std::vector<std::string> tokens;
  std::map<std::string, int> index;

  static Vocab from_tokens(std::vector<std::string> toks) {
    Vocab v;
    v.tokens = std::move(toks);
    for (std::size_t i = 0; i < v.tokens.size(); ++i) {
      if (!v.index.emplace(v.tokens[i], static_cast<int>(i)).second)
        throw VocabError("duplicate vocabulary token '" + v.tokens[i] + "'");
    }
    return v;
  }

  int id(const std::string& tok) const {
    auto it = index.find(tok);
    if (it == index.end()) throw VocabError("token '" + tok + "' not in vocabulary");
    return it->second;
  }

  int size() const { return static_cast<int>(tokens.size()); }
};

struct DatasetMeta {
  int grid_h = 0, grid_w = 0;
  int categories = 0;
  std::uint64_t seed = 0;
  std::string vocab_ref = "vocab.json";
};

struct GresSample {
  int image_id = 0;
  std::vector<int> grid;  // row-major cell category ids, 0 = background
  std::vector<int> tokens;
  Mask gt_mask;
  std::vector<int> gt_counts;
  int gt_exist = 0;
  Polarity polarity = Polarity::positive;
  Scenario scenario = Scenario::single;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<GresSample> samples;
};

inline void validate_sample(const GresSample& s, const DatasetMeta& meta) {
  if (static_cast<int>(s.grid.size()) != meta.grid_h * meta.grid_w)
    throw FormatError("sample: grid size mismatch");
  for (int c : s.grid)
    if (c < 0 || c > meta.categories) throw FormatError("sample: cell id outside 0..C");
  if (s.tokens.empty()) throw FormatError("sample: empty token list");
  s.gt_mask.validate();
  if (s.gt_mask.h != meta.grid_h || s.gt_mask.w != meta.grid_w)
    throw FormatError("sample: mask extent mismatch");
  if (static_cast<int>(s.gt_counts.size()) != meta.categories)
    throw FormatError("sample: counts length mismatch");
  long long count_sum = 0;
  for (int c : s.gt_counts) {
    if (c < 0) throw FormatError("sample: negative count");
    count_sum += c;
  }
  bool nonempty = !s.gt_mask.empty();
  if ((s.gt_exist == 1) != nonempty || nonempty != (count_sum > 0))
    throw FormatError("sample: exist/mask/count flags disagree");
  if (s.scenario == Scenario::none && s.polarity != Polarity::negative)
    throw FormatError("sample: none scenario must be negative polarity");
}

inline json sample_to_json(const GresSample& s, int grid_w) {
  json j;
  j["image_id"] = s.image_id;
  json rows = json::array();
  for (std::size_t i = 0; i < s.grid.size(); i += static_cast<std::size_t>(grid_w)) {
    json row = json::array();
    for (int x = 0; x < grid_w; ++x) row.push_back(s.grid[i + static_cast<std::size_t>(x)]);
    rows.push_back(std::move(row));
  }
  j["grid"] = std::move(rows);
  j["tokens"] = s.tokens;
  j["mask_rle"] = rle_encode(s.gt_mask);
  j["counts"] = s.gt_counts;
  j["exist"] = s.gt_exist;
  j["polarity"] = to_string(s.polarity);
  j["scenario"] = to_string(s.scenario);
  return j;
}

inline json dataset_to_json(const Dataset& ds) {
  json j;
  j["meta"] = {{"grid_hw", {ds.meta.grid_h, ds.meta.grid_w}},
               {"C", ds.meta.categories},
               {"seed", ds.meta.seed},
               {"vocab_ref", ds.meta.vocab_ref}};
  json samples = json::array();
  for (const auto& s : ds.samples) samples.push_back(sample_to_json(s, ds.meta.grid_w));
  j["samples"] = std::move(samples);
  return j;
}

inline Dataset dataset_from_json(const json& j) {
  Dataset ds;
  try {
    const auto& meta = j.at("meta");
    ds.meta.grid_h = meta.at("grid_hw").at(0).get<int>();
    ds.meta.grid_w = meta.at("grid_hw").at(1).get<int>();
    ds.meta.categories = meta.at("C").get<int>();
    ds.meta.seed = meta.at("seed").get<std::uint64_t>();
    ds.meta.vocab_ref = meta.at("vocab_ref").get<std::string>();
    for (const auto& sj : j.at("samples")) {
      GresSample s;
      s.image_id = sj.at("image_id").get<int>();
      for (const auto& row : sj.at("grid"))
        for (const auto& cell : row) s.grid.push_back(cell.get<int>());
      s.tokens = sj.at("tokens").get<std::vector<int>>();
      s.gt_mask = rle_decode(sj.at("mask_rle").get<std::vector<int>>(), ds.meta.grid_h,
                             ds.meta.grid_w);
      s.gt_counts = sj.at("counts").get<std::vector<int>>();
      s.gt_exist = sj.at("exist").get<int>();
      s.polarity = polarity_from(sj.at("polarity").get<std::string>());
      s.scenario = scenario_from(sj.at("scenario").get<std::string>());
      validate_sample(s, ds.meta);
      ds.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset: malformed json: ") + e.what());
  }
  return ds;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "' for writing");
  f << content;
  if (!f) throw FormatError("failed writing '" + path + "'");
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open '" + path + "'");
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

inline void save_dataset(const Dataset& ds, const Vocab& vocab, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_text_file(dir + "/dataset.json", dataset_to_json(ds).dump(2) + "\n");
  json vj;
  vj["tokens"] = vocab.tokens;
  write_text_file(dir + "/" + ds.meta.vocab_ref, vj.dump(2) + "\n");
}

inline Dataset load_dataset(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset: invalid json: ") + e.what());
  }
  return dataset_from_json(j);
}

inline Vocab load_vocab(const std::string& path) {
  try {
    json j = json::parse(read_text_file(path));
    return Vocab::from_tokens(j.at("tokens").get<std::vector<std::string>>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("vocab: invalid json: ") + e.what());
  }
}

// Vocabulary file referenced by a dataset, resolved next to it.
inline std::string vocab_path_for(const std::string& dataset_path, const DatasetMeta& meta) {
  return (std::filesystem::path(dataset_path).parent_path() / meta.vocab_ref).string();
}

}  // namespace greskit
