#pragma once

#include "ssr/numerics/tensor.hpp"

namespace ssr {

// Projection weights of one multi-head attention layer. Weight matrices are
// C×C (applied on the right), biases 1×C.
struct AttentionWeights {
  Tensor wq, bq;
  Tensor wk, bk;
  Tensor wv, bv;
  Tensor wo, bo;
  Index heads = 1;
};

// x·w + b with b broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Scaled dot-product attention with `heads` heads and an output projection.
// q: Lq×C, k/v: Lk×C. Self-attention is q == k == v.
Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionWeights& w);

}  // namespace ssr
