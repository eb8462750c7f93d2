#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "greskit/autodiff.hpp"
#include "greskit/rng.hpp"

namespace greskit {

enum class Act { relu, gelu };

// ---- Eager layers (used by oracle tests and outside tapes) ----

template <typename T>
struct Linear {
  Tensor<T> weight;             // [in x out]
  std::optional<Tensor<T>> bias;  // [out]
};

template <typename T>
Tensor<T> linear_forward(const Linear<T>& l, const Tensor<T>& x) {
  if (l.weight.rank() != 2) throw ShapeError("linear: weight must be rank-2");
  if (x.rank() != 2 || x.cols() != l.weight.rows())
    throw ShapeError("linear: input " + x.shape_str() + " incompatible with weight " +
                     l.weight.shape_str());
  Tensor<T> y = matmul(x, l.weight);
  if (l.bias) {
    if (l.bias->rank() != 1 || l.bias->dim(0) != l.weight.cols())
      throw ShapeError("linear: bias width mismatch");
    for (int i = 0; i < y.rows(); ++i)
      for (int j = 0; j < y.cols(); ++j) y.at(i, j) += (*l.bias)[static_cast<std::size_t>(j)];
  }
  return y;
}

template <typename T>
struct Mlp {
  std::vector<Linear<T>> layers;  // activation after every layer but the last
  Act act = Act::relu;
};

template <typename T>
Tensor<T> mlp_forward(const Mlp<T>& m, const Tensor<T>& x) {
  if (m.layers.empty()) throw ConfigError("mlp: no layers");
  Tensor<T> h = x;
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    h = linear_forward(m.layers[i], h);
    if (i + 1 < m.layers.size()) h = m.act == Act::relu ? relu(h) : gelu(h);
  }
  return h;
}

// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
template <typename T>
Tensor<T> glorot_uniform(Rng& rng, int fan_in, int fan_out) {
  double a = std::sqrt(6.0 / (fan_in + fan_out));
  Tensor<T> w({fan_in, fan_out});
  for (auto& v : w.vec()) v = static_cast<T>(rng.uniform(-a, a));
  return w;
}

// ---- Named parameter store ----

// Parameters keyed by dotted names. std::map keeps iteration sorted, which
// fixes serialization and optimizer update order.
template <typename T>
class ParamStore {
 public:
  void add(const std::string& name, Tensor<T> t) {
    if (!params_.emplace(name, std::move(t)).second)
      throw ConfigError("duplicate parameter " + name);
  }

  Tensor<T>& at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter " + name);
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  std::map<std::string, Tensor<T>>& entries() { return params_; }
  const std::map<std::string, Tensor<T>>& entries() const { return params_; }

  std::size_t count() const { return params_.size(); }

  std::size_t total_numel() const {
    std::size_t n = 0;
    for (const auto& [k, v] : params_) n += v.numel();
    return n;
  }

 private:
  std::map<std::string, Tensor<T>> params_;
};

template <typename T>
void register_linear(ParamStore<T>& store, Rng& rng, const std::string& prefix, int in, int out,
                     bool bias) {
  store.add(prefix + ".weight", glorot_uniform<T>(rng, in, out));
  if (bias) store.add(prefix + ".bias", Tensor<T>({out}));
}

// dims = {in, hidden..., out}; layer i is "<prefix>.<i>".
template <typename T>
void register_mlp(ParamStore<T>& store, Rng& rng, const std::string& prefix,
                  const std::vector<int>& dims, bool bias = true) {
  if (dims.size() < 2) throw ConfigError("mlp dims need at least in/out");
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    register_linear(store, rng, prefix + "." + std::to_string(i), dims[i], dims[i + 1], bias);
}

template <typename T>
void register_embedding(ParamStore<T>& store, Rng& rng, const std::string& name, int vocab,
                        int d) {
  store.add(name, glorot_uniform<T>(rng, vocab, d));
}

// ---- Tape binding ----

// Binds store parameters onto a tape as differentiable leaves, one leaf per
// name per step, and offers linear/mlp helpers mirroring the registration
// layout. Collects per-name gradients after backward().
template <typename T>
class ParamCtx {
 public:
  ParamCtx(Tape<T>& tape, const ParamStore<T>& store, bool trainable = true)
      : tape_(&tape), store_(&store), trainable_(trainable) {}

  Tape<T>& tape() { return *tape_; }
  const ParamStore<T>& store() const { return *store_; }

  Var<T> param(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var<T> v = tape_->leaf(store_->at(name), trainable_);
    bound_.emplace(name, v);
    return v;
  }

  bool has(const std::string& name) const { return store_->contains(name); }

  Var<T> linear(const std::string& prefix, Var<T> x) {
    Var<T> y = matmul(x, param(prefix + ".weight"));
    if (store_->contains(prefix + ".bias")) y = add_row_bias(y, param(prefix + ".bias"));
    return y;
  }

  Var<T> mlp(const std::string& prefix, Var<T> x, Act act = Act::relu) {
    Var<T> h = x;
    for (int i = 0;; ++i) {
      std::string lp = prefix + "." + std::to_string(i);
      if (!store_->contains(lp + ".weight")) {
        if (i == 0) throw ConfigError("mlp: no layers under " + prefix);
        break;
      }
      if (i > 0) h = act == Act::relu ? relu(h) : gelu(h);
      h = linear(lp, h);
    }
    return h;
  }

  // name -> accumulated gradient, for every parameter touched this step.
  std::map<std::string, const Tensor<T>*> grads() const {
    std::map<std::string, const Tensor<T>*> out;
    for (const auto& [name, var] : bound_) out.emplace(name, &tape_->grad(var.id));
    return out;
  }

 private:
  Tape<T>* tape_;
  const ParamStore<T>* store_;
  bool trainable_;
  std::map<std::string, Var<T>> bound_;
};

}  // namespace greskit
