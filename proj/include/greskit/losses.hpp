#pragma once

#include <cmath>
#include <string>

#include "greskit/mask.hpp"
#include "greskit/nn.hpp"

namespace greskit {

struct LossWeights {
  double lambda_mask = 2.0;
  double lambda_count = 0.1;
  double lambda_exist = 1.0;
};

// Pixel-mean two-class cross-entropy of the mask logits against a binary
// ground-truth mask (channel 1 = foreground).
template <typename T>
Var<T> mask_loss(ParamCtx<T>& ctx, Var<T> logits, const Mask& gt) {
  gt.validate();
  const auto& v = logits.value();
  if (v.rank() != 2 || v.cols() != 2 || v.rows() != gt.h * gt.w)
    throw ShapeError("mask_loss: logits " + v.shape_str() + " do not match mask " +
                     std::to_string(gt.h) + "x" + std::to_string(gt.w));
  Tensor<T> target({gt.h * gt.w, 2});
  for (int i = 0; i < gt.h * gt.w; ++i) target.at(i, gt.data[static_cast<std::size_t>(i)]) = T(1);
  (void)ctx;
  return softmax_xent_mean(logits, target);
}

namespace detail {
template <typename T>
void require_finite_scalar(Var<T> v, const char* name) {
  if (v.value().numel() != 1) throw ShapeError(std::string(name) + ": loss must be scalar");
  if (!std::isfinite(static_cast<double>(v.value()[0])))
    throw NumericError(std::string(name) + ": non-finite loss component");
}
}  // namespace detail

// total = lambda_mask * mask + lambda_count * count + lambda_exist * exist.
template <typename T>
Var<T> total_loss(ParamCtx<T>& ctx, Var<T> mask_l, Var<T> count_l, Var<T> exist_l,
                  const LossWeights& w) {
  if (w.lambda_mask < 0 || w.lambda_count < 0 || w.lambda_exist < 0)
    throw ConfigError("total_loss: loss weights must be nonnegative");
  detail::require_finite_scalar(mask_l, "mask loss");
  detail::require_finite_scalar(count_l, "count loss");
  detail::require_finite_scalar(exist_l, "existence loss");
  (void)ctx;
  return add(add(scale(mask_l, static_cast<T>(w.lambda_mask)),
                 scale(count_l, static_cast<T>(w.lambda_count))),
             scale(exist_l, static_cast<T>(w.lambda_exist)));
}

}  // namespace greskit
