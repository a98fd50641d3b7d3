#pragma once

#include "ssr/numerics/tensor.hpp"

#include <span>
#include <vector>

// Differentiable primitives. Every function records itself on the active tape
// when at least one input requires a gradient; otherwise it is a plain
// forward computation.
namespace ssr {

// Product of two rank-2 tensors.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& x, Shape shape);

// Binary ops accept equal shapes, or a `y` of the same rank whose axes are
// either equal to x's or 1 (broadcast along those axes).
Tensor add(const Tensor& x, const Tensor& y);
Tensor sub(const Tensor& x, const Tensor& y);
Tensor mul(const Tensor& x, const Tensor& y);
Tensor scale(const Tensor& x, Scalar factor);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
// Subgradient at 0 is 0.
Tensor abs(const Tensor& x);
Tensor square(const Tensor& x);

enum class ElementwiseOp { Add, Sub, Mul, Sigmoid, Relu, Scale, Abs, Square };
Tensor elementwise(ElementwiseOp op, const Tensor& x, const Tensor* y = nullptr, Scalar factor = 1.0);

enum class ReduceOp { Sum, Mean };
// Drops the listed axes. An empty axis list returns a copy of the input.
Tensor reduce(ReduceOp op, const Tensor& x, std::vector<Index> axes);
Tensor sum(const Tensor& x);   // over all axes -> scalar
Tensor mean(const Tensor& x);  // over all axes -> scalar

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, Index axis);

inline constexpr Scalar kLayerNormEpsilon = 1e-5;

// Normalizes along `axis` (biased variance + kLayerNormEpsilon), then applies
// gamma/beta indexed along that axis.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Index axis);

// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& x, Index axis, Index begin, Index end);
Tensor concat(std::span<const Tensor> parts, Index axis);
// Gathers rows of a rank-2 table (embedding lookup, mode selection).
Tensor gather_rows(const Tensor& table, std::span<const Index> rows);

}  // namespace ssr
