#pragma once

#include "ssr/numerics/attention.hpp"
#include "ssr/numerics/grad_check.hpp"
#include "ssr/numerics/ops.hpp"
#include "ssr/numerics/rng.hpp"
#include "ssr/numerics/tensor.hpp"

#include <vector>

namespace ssr::testing {

inline Tensor random_tensor(Rng& rng, Shape shape, bool requires_grad = true, double lo = -1.0, double hi = 1.0) {
  Vector v(shape_size(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = rng.uniform(lo, hi);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

// sum(y ⊙ r) with a fixed random r, so gradients are not structurally zero
// (e.g. sum(softmax(x)) is constant).
inline Tensor probe_loss(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

// Options for losses whose gradient entries span many decades (structural
// zeros such as key biases under softmax, attention stacks, the full model).
// A plain relative error on an entry far below the largest one only measures
// rounding noise, so the denominator is floored at 1e-5 of the largest entry.
// The step balances that noise against truncation error.
inline GradCheckOptions deep_check(double tolerance) {
  GradCheckOptions o;
  o.step = 3e-5;
  o.relative_floor = 1e-5;
  o.tolerance = tolerance;
  return o;
}

inline AttentionWeights random_attention(Rng& rng, Index channels, Index heads) {
  AttentionWeights w;
  w.heads = heads;
  for (Tensor* t : {&w.wq, &w.wk, &w.wv, &w.wo}) *t = random_tensor(rng, {channels, channels});
  for (Tensor* t : {&w.bq, &w.bk, &w.bv, &w.bo}) *t = random_tensor(rng, {1, channels});
  return w;
}

inline std::vector<NamedTensor> attention_params(const AttentionWeights& w) {
  return {{"wq", w.wq}, {"bq", w.bq}, {"wk", w.wk}, {"bk", w.bk},
          {"wv", w.wv}, {"bv", w.bv}, {"wo", w.wo}, {"bo", w.bo}};
}

}  // namespace ssr::testing
