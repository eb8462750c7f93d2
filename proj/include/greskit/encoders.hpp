#pragma once

#include <string>
#include <vector>

#include "greskit/nn.hpp"

namespace greskit {

struct LevelDims {
  int h = 0, w = 0;
};

// Strides of the visual pyramid, coarsest level first.
inline const std::vector<int>& pyramid_strides() {
  static const std::vector<int> s = {8, 4, 2};
  return s;
}

// ---- Toy visual encoder ----
// The "image" is a grid of cell ids (0 = background, 1..C = category).
// Each cell id is embedded, the embedding map is average-pooled at each
// pyramid stride, and a per-level projection mixes channels.

template <typename T>
struct VisualFeatures {
  std::vector<Var<T>> levels;  // level i: [h_i*w_i x D], coarsest first
  std::vector<LevelDims> dims;
};

template <typename T>
void register_visual_encoder(ParamStore<T>& store, Rng& rng, int cell_vocab, int d) {
  register_embedding(store, rng, "enc.vis.embed", cell_vocab, d);
  for (std::size_t i = 0; i < pyramid_strides().size(); ++i)
    register_linear(store, rng, "enc.vis.proj" + std::to_string(i), d, d, true);
}

template <typename T>
VisualFeatures<T> encode_image(ParamCtx<T>& ctx, const std::vector<int>& grid, int h, int w,
                               int cell_vocab) {
  if (static_cast<int>(grid.size()) != h * w)
    throw InputError("encode_image: grid size does not match h*w");
  if (h % 8 || w % 8 || h < 8 || w < 8)
    throw ConfigError("encode_image: grid sides must be positive multiples of 8");
  for (int id : grid)
    if (id < 0 || id >= cell_vocab)
      throw InputError("encode_image: cell id " + std::to_string(id) + " outside [0, " +
                       std::to_string(cell_vocab) + ")");

  Var<T> emb = embedding(ctx.param("enc.vis.embed"), grid);
  VisualFeatures<T> out;
  for (std::size_t i = 0; i < pyramid_strides().size(); ++i) {
    int s = pyramid_strides()[i];
    Var<T> pooled = avg_pool_cells(emb, h, w, s);
    out.levels.push_back(ctx.linear("enc.vis.proj" + std::to_string(i), pooled));
    out.dims.push_back({h / s, w / s});
  }
  return out;
}

// ---- Toy language encoder ----
// Word embeddings plus a projected mean-pooled sentence row appended last,
// forming the initial query set Q^L = [words; sentence].

template <typename T>
struct LanguageFeatures {
  Var<T> words;     // [t x D]
  Var<T> sentence;  // [1 x D]
  Var<T> queries;   // [(t+1) x D]
};

template <typename T>
void register_language_encoder(ParamStore<T>& store, Rng& rng, int vocab, int d) {
  register_embedding(store, rng, "enc.txt.embed", vocab, d);
  register_linear(store, rng, "enc.txt.sent", d, d, true);
}

template <typename T>
LanguageFeatures<T> encode_text(ParamCtx<T>& ctx, const std::vector<int>& tokens, int vocab,
                                int max_len) {
  if (tokens.empty()) throw InputError("encode_text: empty token list");
  if (static_cast<int>(tokens.size()) > max_len)
    throw InputError("encode_text: " + std::to_string(tokens.size()) + " tokens exceed max_len " +
                     std::to_string(max_len));
  for (int id : tokens)
    if (id < 0 || id >= vocab)
      throw VocabError("encode_text: token id " + std::to_string(id) + " outside vocab of " +
                       std::to_string(vocab));

  LanguageFeatures<T> out;
  out.words = embedding(ctx.param("enc.txt.embed"), tokens);
  out.sentence = ctx.linear("enc.txt.sent", mean_rows(out.words));
  out.queries = concat_rows(out.words, out.sentence);
  return out;
}

}  // namespace greskit
