#pragma once

#include <cmath>
#include <map>
#include <string>

#include "greskit/config.hpp"
#include "greskit/nn.hpp"

namespace greskit {

inline double scheduled_lr(const OptimConfig& oc, int step) {
  if (oc.schedule == LrSchedule::constant || oc.steps <= 0) return oc.lr;
  constexpr double pi = 3.14159265358979323846;
  double frac = static_cast<double>(step) / static_cast<double>(oc.steps);
  return oc.lr * 0.5 * (1.0 + std::cos(pi * frac));
}

// Adaptive moment estimation with decoupled weight decay.
class AdamW {
 public:
  AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8, double weight_decay = 0.05)
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  void step(ParamStore<double>& store, const std::map<std::string, const Tensor<double>*>& grads,
            double lr) {
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (auto& [key, param] : store.entries()) {
      auto git = grads.find(key);
      if (git == grads.end()) continue;
      const Tensor<double>& g = *git->second;
      require_same_shape(param, g, "adamw");
      auto& m = moment(m1_, key, param);
      auto& v = moment(m2_, key, param);
      for (std::size_t i = 0; i < param.numel(); ++i) {
        double gi = g[i];
        m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
        v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
        double mhat = m[i] / bc1;
        double vhat = v[i] / bc2;
        param[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * param[i]);
      }
    }
  }

  long long steps_taken() const { return t_; }

 private:
  Tensor<double>& moment(std::map<std::string, Tensor<double>>& slot, const std::string& key,
                         const Tensor<double>& like) {
    auto it = slot.find(key);
    if (it == slot.end()) it = slot.emplace(key, Tensor<double>::zeros(like.shape())).first;
    return it->second;
  }

  double beta1_, beta2_, eps_, weight_decay_;
  long long t_ = 0;
  std::map<std::string, Tensor<double>> m1_, m2_;
};

}  // namespace greskit
