#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "greskit/config.hpp"
#include "greskit/nn.hpp"

namespace greskit {

// Checkpoint layout (all integers little-endian uint32):
//   magic "GKC1"
//   header_len, header bytes (JSON: format, dtype, params, model config)
//   per parameter, sorted by key:
//     key_len, key bytes, rank, dims[rank], float32 data (row-major)

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  b[0] = static_cast<char>(v & 0xff);
  b[1] = static_cast<char>((v >> 8) & 0xff);
  b[2] = static_cast<char>((v >> 16) & 0xff);
  b[3] = static_cast<char>((v >> 24) & 0xff);
  out.append(b, 4);
}

inline void put_f32(std::string& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

struct ByteReader {
  const std::string& buf;
  std::size_t pos = 0;

  explicit ByteReader(const std::string& b) : buf(b) {}

  void need(std::size_t n) const {
    if (pos + n > buf.size()) throw FormatError("checkpoint: truncated file");
  }

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i)
      v = (v << 8) | static_cast<std::uint8_t>(buf[pos + static_cast<std::size_t>(i)]);
    pos += 4;
    return v;
  }

  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

inline json model_config_to_json(const ModelConfig& m) {
  json j;
  j["D"] = m.d;
  j["n_heads"] = m.n_heads;
  j["sdm_layers"] = m.sdm_layers;
  j["upsample_mode"] = m.upsample == Upsample::bilinear ? "bilinear" : "nearest";
  j["kernel"] = m.kernel == MaskKernel::pooled ? "pooled" : "per_token";
  j["react"] = m.react == React::concat_linear ? "concat_linear"
               : m.react == React::add         ? "add"
                                                : "cross_attn";
  j["mha_residual"] = m.mha_residual;
  j["token_reduce"] = m.token_reduce == TokenReduce::sum ? "sum" : "mean";
  j["categories"] = m.categories;
  j["max_len"] = m.max_len;
  j["grid_hw"] = {m.grid_h, m.grid_w};
  j["text_vocab"] = m.text_vocab;
  j["hsd_off"] = m.hsd_off;
  j["aoc_off"] = m.aoc_off;
  j["aoc_binary_only"] = m.aoc_binary_only;
  j["intra_off"] = m.intra_off;
  j["inter_off"] = m.inter_off;
  j["deep_supervision"] = m.deep_supervision;
  return j;
}

inline ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  try {
    m.d = j.at("D").get<int>();
    m.n_heads = j.at("n_heads").get<int>();
    m.sdm_layers = j.at("sdm_layers").get<int>();
    m.upsample = upsample_from(j.at("upsample_mode").get<std::string>());
    m.kernel = kernel_from(j.at("kernel").get<std::string>());
    m.react = react_from(j.at("react").get<std::string>());
    m.mha_residual = j.at("mha_residual").get<bool>();
    m.token_reduce = reduce_from(j.at("token_reduce").get<std::string>());
    m.categories = j.at("categories").get<int>();
    m.max_len = j.at("max_len").get<int>();
    m.grid_h = j.at("grid_hw").at(0).get<int>();
    m.grid_w = j.at("grid_hw").at(1).get<int>();
    m.text_vocab = j.at("text_vocab").get<int>();
    m.hsd_off = j.at("hsd_off").get<bool>();
    m.aoc_off = j.at("aoc_off").get<bool>();
    m.aoc_binary_only = j.at("aoc_binary_only").get<bool>();
    m.intra_off = j.at("intra_off").get<bool>();
    m.inter_off = j.at("inter_off").get<bool>();
    m.deep_supervision = j.at("deep_supervision").get<bool>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: malformed model header: ") + e.what());
  }
  m.validate();
  return m;
}

}  // namespace detail

inline std::string checkpoint_bytes(const ParamStore<double>& store, const ModelConfig& mcfg) {
  std::string out;
  out += "GKC1";
  json header;
  header["format"] = 1;
  header["dtype"] = "f32";
  header["params"] = store.count();
  header["model"] = detail::model_config_to_json(mcfg);
  std::string hs = header.dump();
  detail::put_u32(out, static_cast<std::uint32_t>(hs.size()));
  out += hs;
  for (const auto& [key, tensor] : store.entries()) {  // std::map: sorted keys
    detail::put_u32(out, static_cast<std::uint32_t>(key.size()));
    out += key;
    detail::put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
    for (int r = 0; r < tensor.rank(); ++r)
      detail::put_u32(out, static_cast<std::uint32_t>(tensor.dim(r)));
    for (double v : tensor.vec()) detail::put_f32(out, static_cast<float>(v));
  }
  return out;
}

inline void save_checkpoint(const ParamStore<double>& store, const ModelConfig& mcfg,
                            const std::string& path) {
  write_text_file(path, checkpoint_bytes(store, mcfg));
}

struct Checkpoint {
  ParamStore<double> store;
  ModelConfig model;
};

inline Checkpoint checkpoint_from_bytes(const std::string& buf) {
  detail::ByteReader rd(buf);
  if (rd.bytes(4) != "GKC1") throw FormatError("checkpoint: bad magic");
  std::uint32_t header_len = rd.u32();
  json header;
  try {
    header = json::parse(rd.bytes(header_len));
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header: ") + e.what());
  }
  if (header.value("dtype", "") != "f32") throw FormatError("checkpoint: unsupported dtype");
  Checkpoint ck;
  ck.model = detail::model_config_from_json(header.at("model"));
  std::size_t n_params = header.at("params").get<std::size_t>();
  for (std::size_t p = 0; p < n_params; ++p) {
    std::uint32_t key_len = rd.u32();
    std::string key = rd.bytes(key_len);
    std::uint32_t rank = rd.u32();
    if (rank > 8) throw FormatError("checkpoint: implausible tensor rank");
    std::vector<int> shape;
    std::size_t numel = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      shape.push_back(static_cast<int>(rd.u32()));
      numel *= static_cast<std::size_t>(shape.back());
    }
    Tensor<double> t = Tensor<double>::zeros(shape);
    for (std::size_t i = 0; i < numel; ++i) t[i] = static_cast<double>(rd.f32());
    ck.store.add(key, std::move(t));
  }
  if (rd.pos != buf.size()) throw FormatError("checkpoint: trailing bytes");
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_bytes(read_text_file(path));
}

}  // namespace greskit
