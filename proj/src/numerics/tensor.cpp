#include "ssr/numerics/tensor.hpp"

#include "ssr/errors.hpp"

#include <sstream>
#include <utility>

namespace ssr {

Index shape_size(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : storage_(std::make_shared<TensorStorage>()) {
  storage_->value = Vector::Zero(1);
}

Tensor::Tensor(Shape shape, Vector value, bool requires_grad)
    : storage_(std::make_shared<TensorStorage>()) {
  for (Index d : shape) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape));
  }
  if (shape_size(shape) != value.size()) {
    throw DimensionError("shape " + shape_string(shape) + " does not match " +
                         std::to_string(value.size()) + " values");
  }
  storage_->shape = std::move(shape);
  storage_->value = std::move(value);
  storage_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const Index n = shape_size(shape);
  return Tensor(std::move(shape), Vector::Zero(n), requires_grad);
}

Tensor Tensor::constant(Shape shape, Scalar v, bool requires_grad) {
  const Index n = shape_size(shape);
  return Tensor(std::move(shape), Vector::Constant(n, v), requires_grad);
}

Tensor Tensor::from(Shape shape, std::initializer_list<Scalar> values, bool requires_grad) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (Scalar x : values) v[i++] = x;
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(Scalar v, bool requires_grad) {
  return Tensor(Shape{}, Vector::Constant(1, v), requires_grad);
}

Tensor Tensor::from_matrix(const RowMatrix& m, bool requires_grad) {
  Vector v = Eigen::Map<const Vector>(m.data(), m.size());
  return Tensor(Shape{m.rows(), m.cols()}, std::move(v), requires_grad);
}

Index Tensor::dim(Index axis) const {
  if (axis < 0 || axis >= rank()) {
    throw RangeError("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape()));
  }
  return storage_->shape[static_cast<std::size_t>(axis)];
}

Scalar Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return storage_->value[0];
}

ConstMatrixMap Tensor::matrix() const {
  const auto& s = storage_->shape;
  if (s.size() == 2) return ConstMatrixMap(storage_->value.data(), s[0], s[1]);
  if (s.size() <= 1) return ConstMatrixMap(storage_->value.data(), 1, storage_->value.size());
  throw DimensionError("matrix view needs rank <= 2, got " + shape_string(s));
}

Vector Tensor::grad() const {
  if (has_grad()) return storage_->grad;
  return Vector::Zero(storage_->value.size());
}

Tensor Tensor::detach() const { return Tensor(shape(), value(), false); }

}  // namespace ssr
