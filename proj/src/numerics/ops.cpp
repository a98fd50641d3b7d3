#include "ssr/numerics/ops.hpp"

#include "ssr/errors.hpp"
#include "ssr/numerics/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

namespace ssr {
namespace {

using detail::accumulate;
using detail::should_record;

void require_rank(const Tensor& t, Index rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

Index normalize_axis(Index axis, Index rank, const char* op) {
  if (axis < 0) axis += rank;
  if (axis < 0 || axis >= rank) {
    throw RangeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return axis;
}

// Splits a shape into [outer, n, inner] around `axis`.
struct AxisSplit {
  Index outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, Index axis) {
  AxisSplit s;
  for (Index i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
  s.n = shape[static_cast<std::size_t>(axis)];
  for (Index i = axis + 1; i < static_cast<Index>(shape.size()); ++i) s.inner *= shape[static_cast<std::size_t>(i)];
  return s;
}

// For broadcasting y onto x: index into y for each flat index of x.
// Returns an empty vector when shapes are equal.
std::shared_ptr<const std::vector<Index>> broadcast_map(const Shape& xs, const Shape& ys, const char* op) {
  if (xs == ys) return nullptr;
  bool ok = xs.size() == ys.size();
  for (std::size_t i = 0; ok && i < xs.size(); ++i) ok = ys[i] == xs[i] || ys[i] == 1;
  if (!ok) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_string(ys) + " onto " +
                         shape_string(xs));
  }
  const std::size_t rank = xs.size();
  std::vector<Index> ystride(rank, 0);
  Index stride = 1;
  for (std::size_t i = rank; i-- > 0;) {
    ystride[i] = ys[i] == 1 ? 0 : stride;
    stride *= ys[i];
  }
  auto map = std::make_shared<std::vector<Index>>(static_cast<std::size_t>(shape_size(xs)));
  std::vector<Index> counter(rank, 0);
  Index yi = 0;
  for (auto& m : *map) {
    m = yi;
    for (std::size_t a = rank; a-- > 0;) {
      ++counter[a];
      yi += ystride[a];
      if (counter[a] < xs[a]) break;
      yi -= ystride[a] * counter[a];
      counter[a] = 0;
    }
  }
  return map;
}

Vector gather(const Vector& y, const std::vector<Index>* map) {
  if (!map) return y;
  Vector out(static_cast<Index>(map->size()));
  for (std::size_t i = 0; i < map->size(); ++i) out[static_cast<Index>(i)] = y[(*map)[i]];
  return out;
}

Vector scatter_add(const Vector& g, const std::vector<Index>* map, Index ysize) {
  if (!map) return g;
  Vector out = Vector::Zero(ysize);
  for (std::size_t i = 0; i < map->size(); ++i) out[(*map)[i]] += g[static_cast<Index>(i)];
  return out;
}

enum class BinaryKind { Add, Sub, Mul };

Tensor binary(BinaryKind kind, const Tensor& x, const Tensor& y, const char* op) {
  auto map = broadcast_map(x.shape(), y.shape(), op);
  const Vector yb = gather(y.value(), map.get());
  Vector v;
  switch (kind) {
    case BinaryKind::Add: v = x.value() + yb; break;
    case BinaryKind::Sub: v = x.value() - yb; break;
    case BinaryKind::Mul: v = x.value().cwiseProduct(yb); break;
  }
  Tensor out(x.shape(), std::move(v));
  if (should_record({&x, &y})) {
    auto xs = x.storage();
    auto ys = y.storage();
    detail::record(op, {x, y}, out, [kind, xs, ys, map](const Vector& g) {
      const Index ysize = ys->value.size();
      switch (kind) {
        case BinaryKind::Add:
          accumulate(*xs, g);
          accumulate(*ys, scatter_add(g, map.get(), ysize));
          break;
        case BinaryKind::Sub:
          accumulate(*xs, g);
          accumulate(*ys, scatter_add(-g, map.get(), ysize));
          break;
        case BinaryKind::Mul: {
          if (xs->requires_grad) accumulate(*xs, g.cwiseProduct(gather(ys->value, map.get())));
          if (ys->requires_grad) accumulate(*ys, scatter_add(g.cwiseProduct(xs->value), map.get(), ysize));
          break;
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: incompatible shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  const Index m = a.dim(0), n = b.dim(1);
  RowMatrix prod = a.matrix() * b.matrix();
  Tensor out(Shape{m, n}, Eigen::Map<const Vector>(prod.data(), prod.size()));
  if (should_record({&a, &b})) {
    auto as = a.storage();
    auto bs = b.storage();
    detail::record("matmul", {a, b}, out, [as, bs, m, n](const Vector& g) {
      const Index k = as->shape[1];
      ConstMatrixMap gm(g.data(), m, n);
      ConstMatrixMap am(as->value.data(), m, k);
      ConstMatrixMap bm(bs->value.data(), k, n);
      if (as->requires_grad) {
        MatrixMap(detail::grad_buffer(*as).data(), m, k).noalias() += gm * bm.transpose();
      }
      if (bs->requires_grad) {
        MatrixMap(detail::grad_buffer(*bs).data(), k, n).noalias() += am.transpose() * gm;
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const Index m = a.dim(0), n = a.dim(1);
  RowMatrix t = a.matrix().transpose();
  Tensor out(Shape{n, m}, Eigen::Map<const Vector>(t.data(), t.size()));
  if (should_record({&a})) {
    auto as = a.storage();
    detail::record("transpose", {a}, out, [as, m, n](const Vector& g) {
      RowMatrix gt = ConstMatrixMap(g.data(), n, m).transpose();
      accumulate(*as, Eigen::Map<const Vector>(gt.data(), gt.size()));
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  Tensor out(std::move(shape), x.value());
  if (should_record({&x})) {
    auto xs = x.storage();
    detail::record("reshape", {x}, out, [xs](const Vector& g) { accumulate(*xs, g); });
  }
  return out;
}

Tensor add(const Tensor& x, const Tensor& y) { return binary(BinaryKind::Add, x, y, "add"); }
Tensor sub(const Tensor& x, const Tensor& y) { return binary(BinaryKind::Sub, x, y, "sub"); }
Tensor mul(const Tensor& x, const Tensor& y) { return binary(BinaryKind::Mul, x, y, "mul"); }

Tensor scale(const Tensor& x, Scalar factor) {
  Tensor out(x.shape(), x.value() * factor);
  if (should_record({&x})) {
    auto xs = x.storage();
    detail::record("scale", {x}, out, [xs, factor](const Vector& g) { accumulate(*xs, g * factor); });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  Vector v = x.value().unaryExpr([](Scalar a) {
    // Split by sign so exp() never overflows; clamp keeps the range open.
    constexpr Scalar kLo = std::numeric_limits<Scalar>::min();
    constexpr Scalar kHi = 1.0 - std::numeric_limits<Scalar>::epsilon() / 2;
    Scalar y;
    if (a >= 0) {
      y = 1.0 / (1.0 + std::exp(-a));
    } else {
      const Scalar e = std::exp(a);
      y = e / (1.0 + e);
    }
    return std::clamp(y, kLo, kHi);
  });
  Tensor out(x.shape(), v);
  if (should_record({&x})) {
    auto xs = x.storage();
    detail::record("sigmoid", {x}, out, [xs, v](const Vector& g) {
      accumulate(*xs, g.cwiseProduct(v.cwiseProduct((1.0 - v.array()).matrix())));
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape(), x.value().cwiseMax(0.0));
  if (should_record({&x})) {
    auto xs = x.storage();
    detail::record("relu", {x}, out, [xs](const Vector& g) {
      accumulate(*xs, (xs->value.array() > 0.0).select(g.array(), 0.0).matrix());
    });
  }
  return out;
}

Tensor abs(const Tensor& x) {
  Tensor out(x.shape(), x.value().cwiseAbs());
  if (should_record({&x})) {
    auto xs = x.storage();
    detail::record("abs", {x}, out, [xs](const Vector& g) {
      Vector sign = xs->value.unaryExpr([](Scalar a) { return a > 0 ? 1.0 : (a < 0 ? -1.0 : 0.0); });
      accumulate(*xs, g.cwiseProduct(sign));
    });
  }
  return out;
}

Tensor square(const Tensor& x) {
  Tensor out(x.shape(), x.value().cwiseAbs2());
  if (should_record({&x})) {
    auto xs = x.storage();
    detail::record("square", {x}, out, [xs](const Vector& g) {
      accumulate(*xs, 2.0 * g.cwiseProduct(xs->value));
    });
  }
  return out;
}

Tensor elementwise(ElementwiseOp op, const Tensor& x, const Tensor* y, Scalar factor) {
  auto need_y = [&]() -> const Tensor& {
    if (!y) throw ContractError("elementwise: binary op needs a second operand");
    return *y;
  };
  switch (op) {
    case ElementwiseOp::Add: return add(x, need_y());
    case ElementwiseOp::Sub: return sub(x, need_y());
    case ElementwiseOp::Mul: return mul(x, need_y());
    case ElementwiseOp::Sigmoid: return sigmoid(x);
    case ElementwiseOp::Relu: return relu(x);
    case ElementwiseOp::Scale: return scale(x, factor);
    case ElementwiseOp::Abs: return abs(x);
    case ElementwiseOp::Square: return square(x);
  }
  throw ContractError("elementwise: unknown op");
}

Tensor reduce(ReduceOp op, const Tensor& x, std::vector<Index> axes) {
  const Index rank = x.rank();
  for (auto& a : axes) a = normalize_axis(a, rank, "reduce");
  std::sort(axes.begin(), axes.end());
  axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
  if (axes.empty()) {
    Tensor out(x.shape(), x.value());
    if (should_record({&x})) {
      auto xs = x.storage();
      detail::record("reduce", {x}, out, [xs](const Vector& g) { accumulate(*xs, g); });
    }
    return out;
  }

  Shape out_shape;
  Shape kept(x.shape());
  Index count = 1;
  for (Index a = 0; a < rank; ++a) {
    if (std::binary_search(axes.begin(), axes.end(), a)) {
      count *= x.dim(a);
      kept[static_cast<std::size_t>(a)] = 1;
    } else {
      out_shape.push_back(x.dim(a));
    }
  }
  // Map each input element to its output slot (kept-axes broadcast).
  auto map = broadcast_map(x.shape(), kept, "reduce");
  const Index out_size = shape_size(out_shape);
  Vector v = scatter_add(x.value(), map.get(), out_size);
  const Scalar factor = op == ReduceOp::Mean ? 1.0 / static_cast<Scalar>(count) : 1.0;
  v *= factor;
  Tensor out(std::move(out_shape), std::move(v));
  if (should_record({&x})) {
    auto xs = x.storage();
    detail::record("reduce", {x}, out, [xs, map, factor](const Vector& g) {
      accumulate(*xs, gather(g, map.get()) * factor);
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  std::vector<Index> axes(static_cast<std::size_t>(x.rank()));
  std::iota(axes.begin(), axes.end(), Index{0});
  if (axes.empty()) return reduce(ReduceOp::Sum, x, {});
  return reduce(ReduceOp::Sum, x, axes);
}

Tensor mean(const Tensor& x) {
  std::vector<Index> axes(static_cast<std::size_t>(x.rank()));
  std::iota(axes.begin(), axes.end(), Index{0});
  if (axes.empty()) return reduce(ReduceOp::Mean, x, {});
  return reduce(ReduceOp::Mean, x, axes);
}

Tensor softmax(const Tensor& x, Index axis) {
  axis = normalize_axis(axis, x.rank(), "softmax");
  const AxisSplit s = split_axis(x.shape(), axis);
  const Vector& in = x.value();
  Vector v(in.size());
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.n * s.inner + i;
      Scalar mx = in[base];
      for (Index k = 1; k < s.n; ++k) mx = std::max(mx, in[base + k * s.inner]);
      Scalar total = 0;
      for (Index k = 0; k < s.n; ++k) {
        const Scalar e = std::exp(in[base + k * s.inner] - mx);
        v[base + k * s.inner] = e;
        total += e;
      }
      for (Index k = 0; k < s.n; ++k) v[base + k * s.inner] /= total;
    }
  }
  Tensor out(x.shape(), v);
  if (should_record({&x})) {
    auto xs = x.storage();
    detail::record("softmax", {x}, out, [xs, v, s](const Vector& g) {
      Vector dx(v.size());
      for (Index o = 0; o < s.outer; ++o) {
        for (Index i = 0; i < s.inner; ++i) {
          const Index base = o * s.n * s.inner + i;
          Scalar dot = 0;
          for (Index k = 0; k < s.n; ++k) dot += g[base + k * s.inner] * v[base + k * s.inner];
          for (Index k = 0; k < s.n; ++k) {
            const Index j = base + k * s.inner;
            dx[j] = v[j] * (g[j] - dot);
          }
        }
      }
      accumulate(*xs, dx);
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Index axis) {
  axis = normalize_axis(axis, x.rank(), "layer_norm");
  const AxisSplit s = split_axis(x.shape(), axis);
  if (gamma.size() != s.n || beta.size() != s.n) {
    throw DimensionError("layer_norm: gamma " + shape_string(gamma.shape()) + " / beta " +
                         shape_string(beta.shape()) + " must have " + std::to_string(s.n) + " entries");
  }
  const Vector& in = x.value();
  const Vector& gm = gamma.value();
  const Vector& bt = beta.value();
  Vector xhat(in.size());
  Vector inv_std(s.outer * s.inner);
  Vector v(in.size());
  for (Index o = 0; o < s.outer; ++o) {
    for (Index i = 0; i < s.inner; ++i) {
      const Index base = o * s.n * s.inner + i;
      Scalar mu = 0;
      for (Index k = 0; k < s.n; ++k) mu += in[base + k * s.inner];
      mu /= static_cast<Scalar>(s.n);
      Scalar var = 0;
      for (Index k = 0; k < s.n; ++k) {
        const Scalar d = in[base + k * s.inner] - mu;
        var += d * d;
      }
      var /= static_cast<Scalar>(s.n);
      const Scalar r = 1.0 / std::sqrt(var + kLayerNormEpsilon);
      inv_std[o * s.inner + i] = r;
      for (Index k = 0; k < s.n; ++k) {
        const Index j = base + k * s.inner;
        xhat[j] = (in[j] - mu) * r;
        v[j] = gm[k] * xhat[j] + bt[k];
      }
    }
  }
  Tensor out(x.shape(), std::move(v));
  if (should_record({&x, &gamma, &beta})) {
    auto xs = x.storage();
    auto gs = gamma.storage();
    auto bs = beta.storage();
    detail::record("layer_norm", {x, gamma, beta}, out, [xs, gs, bs, xhat, inv_std, s](const Vector& g) {
      const Vector& gm = gs->value;
      Vector dgamma = Vector::Zero(s.n);
      Vector dbeta = Vector::Zero(s.n);
      Vector dx(g.size());
      for (Index o = 0; o < s.outer; ++o) {
        for (Index i = 0; i < s.inner; ++i) {
          const Index base = o * s.n * s.inner + i;
          Scalar mean_d = 0, mean_dx = 0;
          for (Index k = 0; k < s.n; ++k) {
            const Index j = base + k * s.inner;
            dgamma[k] += g[j] * xhat[j];
            dbeta[k] += g[j];
            const Scalar d = g[j] * gm[k];
            mean_d += d;
            mean_dx += d * xhat[j];
          }
          mean_d /= static_cast<Scalar>(s.n);
          mean_dx /= static_cast<Scalar>(s.n);
          const Scalar r = inv_std[o * s.inner + i];
          for (Index k = 0; k < s.n; ++k) {
            const Index j = base + k * s.inner;
            dx[j] = r * (g[j] * gm[k] - mean_d - xhat[j] * mean_dx);
          }
        }
      }
      accumulate(*xs, dx);
      accumulate(*gs, dgamma);
      accumulate(*bs, dbeta);
    });
  }
  return out;
}

Tensor slice(const Tensor& x, Index axis, Index begin, Index end) {
  axis = normalize_axis(axis, x.rank(), "slice");
  const AxisSplit s = split_axis(x.shape(), axis);
  if (begin < 0 || end > s.n || begin >= end) {
    throw RangeError("slice: [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside axis of size " +
                     std::to_string(s.n));
  }
  const Index len = end - begin;
  Shape out_shape = x.shape();
  out_shape[static_cast<std::size_t>(axis)] = len;
  Vector v(s.outer * len * s.inner);
  for (Index o = 0; o < s.outer; ++o) {
    v.segment(o * len * s.inner, len * s.inner) = x.value().segment((o * s.n + begin) * s.inner, len * s.inner);
  }
  Tensor out(std::move(out_shape), std::move(v));
  if (should_record({&x})) {
    auto xs = x.storage();
    detail::record("slice", {x}, out, [xs, s, begin, len](const Vector& g) {
      Vector& buf = detail::grad_buffer(*xs);
      for (Index o = 0; o < s.outer; ++o) {
        buf.segment((o * s.n + begin) * s.inner, len * s.inner) += g.segment(o * len * s.inner, len * s.inner);
      }
    });
  }
  return out;
}

Tensor concat(std::span<const Tensor> parts, Index axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Tensor& first = parts.front();
  axis = normalize_axis(axis, first.rank(), "concat");
  std::vector<AxisSplit> splits;
  Index total = 0;
  for (const auto& p : parts) {
    bool ok = p.rank() == first.rank();
    for (Index a = 0; ok && a < first.rank(); ++a) ok = a == axis || p.dim(a) == first.dim(a);
    if (!ok) {
      throw DimensionError("concat: " + shape_string(p.shape()) + " incompatible with " +
                           shape_string(first.shape()) + " along axis " + std::to_string(axis));
    }
    splits.push_back(split_axis(p.shape(), axis));
    total += splits.back().n;
  }
  const Index outer = splits.front().outer, inner = splits.front().inner;
  Shape out_shape = first.shape();
  out_shape[static_cast<std::size_t>(axis)] = total;
  Vector v(outer * total * inner);
  Index offset = 0;
  std::vector<Index> offsets;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Index len = splits[p].n;
    offsets.push_back(offset);
    for (Index o = 0; o < outer; ++o) {
      v.segment((o * total + offset) * inner, len * inner) = parts[p].value().segment(o * len * inner, len * inner);
    }
    offset += len;
  }
  Tensor out(std::move(out_shape), std::move(v));
  bool record = false;
  for (const auto& p : parts) record = record || should_record({&p});
  if (record) {
    std::vector<std::shared_ptr<TensorStorage>> stores;
    for (const auto& p : parts) stores.push_back(p.storage());
    detail::record("concat", std::vector<Tensor>(parts.begin(), parts.end()), out,
                   [stores, splits, offsets, outer, inner, total](const Vector& g) {
                     for (std::size_t p = 0; p < stores.size(); ++p) {
                       if (!stores[p]->requires_grad) continue;
                       const Index len = splits[p].n;
                       Vector& buf = detail::grad_buffer(*stores[p]);
                       for (Index o = 0; o < outer; ++o) {
                         buf.segment(o * len * inner, len * inner) +=
                             g.segment((o * total + offsets[p]) * inner, len * inner);
                       }
                     }
                   });
  }
  return out;
}

Tensor gather_rows(const Tensor& table, std::span<const Index> rows) {
  require_rank(table, 2, "gather_rows");
  const Index n = table.dim(0), width = table.dim(1);
  std::vector<Index> idx(rows.begin(), rows.end());
  if (idx.empty()) throw ContractError("gather_rows: no rows requested");
  Vector v(static_cast<Index>(idx.size()) * width);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] < 0 || idx[r] >= n) {
      throw RangeError("gather_rows: row " + std::to_string(idx[r]) + " outside table of " + std::to_string(n));
    }
    v.segment(static_cast<Index>(r) * width, width) = table.value().segment(idx[r] * width, width);
  }
  Tensor out(Shape{static_cast<Index>(idx.size()), width}, std::move(v));
  if (should_record({&table})) {
    auto ts = table.storage();
    detail::record("gather_rows", {table}, out, [ts, idx, width](const Vector& g) {
      Vector& buf = detail::grad_buffer(*ts);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        buf.segment(idx[r] * width, width) += g.segment(static_cast<Index>(r) * width, width);
      }
    });
  }
  return out;
}

}  // namespace ssr
