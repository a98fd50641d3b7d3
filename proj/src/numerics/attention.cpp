#include "ssr/numerics/attention.hpp"

#include "ssr/errors.hpp"
#include "ssr/numerics/ops.hpp"

#include <cmath>
#include <vector>

namespace ssr {

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

Tensor multihead_attention(const Tensor& q, const Tensor& k, const Tensor& v, const AttentionWeights& w) {
  if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
    throw DimensionError("multihead_attention: q/k/v must be rank 2, got " + shape_string(q.shape()) + ", " +
                         shape_string(k.shape()) + ", " + shape_string(v.shape()));
  }
  const Index channels = q.dim(1);
  if (w.heads < 1 || channels % w.heads != 0) {
    throw ConfigError("multihead_attention: channels " + std::to_string(channels) + " not divisible by " +
                      std::to_string(w.heads) + " heads");
  }
  if (k.dim(0) != v.dim(0) || k.dim(1) != channels || v.dim(1) != channels) {
    throw DimensionError("multihead_attention: key " + shape_string(k.shape()) + " / value " +
                         shape_string(v.shape()) + " incompatible with query " + shape_string(q.shape()));
  }
  const Index head_dim = channels / w.heads;
  const Scalar temperature = 1.0 / std::sqrt(static_cast<Scalar>(head_dim));

  const Tensor qp = linear(q, w.wq, w.bq);
  const Tensor kp = linear(k, w.wk, w.bk);
  const Tensor vp = linear(v, w.wv, w.bv);

  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(w.heads));
  for (Index h = 0; h < w.heads; ++h) {
    const Index lo = h * head_dim, hi = lo + head_dim;
    const Tensor qh = w.heads == 1 ? qp : slice(qp, 1, lo, hi);
    const Tensor kh = w.heads == 1 ? kp : slice(kp, 1, lo, hi);
    const Tensor vh = w.heads == 1 ? vp : slice(vp, 1, lo, hi);
    const Tensor scores = scale(matmul(qh, transpose(kh)), temperature);
    heads.push_back(matmul(softmax(scores, 1), vh));
  }
  const Tensor merged = w.heads == 1 ? heads.front() : concat(heads, 1);
  return linear(merged, w.wo, w.bo);
}

}  // namespace ssr
