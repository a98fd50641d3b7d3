#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace ssr {

using Scalar = double;
using Index = Eigen::Index;
using Shape = std::vector<Index>;

using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

Index shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

// Storage shared between a Tensor handle and the tape nodes that reference it.
struct TensorStorage {
  Shape shape;
  Vector value;
  Vector grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::optional<std::size_t> node_id;
};

// Row-major dense array of doubles. Copies are shallow: two handles copied
// from each other alias the same storage, which is how parameters are shared
// between a ParamStore and the model code that reads them.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, Vector value, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor constant(Shape shape, Scalar v, bool requires_grad = false);
  static Tensor from(Shape shape, std::initializer_list<Scalar> values, bool requires_grad = false);
  static Tensor scalar(Scalar v, bool requires_grad = false);
  static Tensor from_matrix(const RowMatrix& m, bool requires_grad = false);

  const Shape& shape() const { return storage_->shape; }
  Index rank() const { return static_cast<Index>(storage_->shape.size()); }
  Index dim(Index axis) const;
  Index size() const { return storage_->value.size(); }

  const Vector& value() const { return storage_->value; }
  // Mutable access for optimizers and finite-difference probes; never call
  // while a tape that references this tensor is still pending backward().
  Vector& mutable_value() { return storage_->value; }
  Scalar operator[](Index i) const { return storage_->value[i]; }
  Scalar item() const;

  // Rank-2 view; rank-1 tensors view as 1×n, scalars as 1×1.
  ConstMatrixMap matrix() const;
  RowMatrix to_matrix() const { return matrix(); }

  bool requires_grad() const { return storage_->requires_grad; }
  void set_requires_grad(bool on) { storage_->requires_grad = on; }
  bool has_grad() const { return storage_->grad.size() == storage_->value.size(); }
  // Zero vector of matching size when no gradient has been accumulated.
  Vector grad() const;
  void zero_grad() { storage_->grad.resize(0); }

  std::optional<std::size_t> node_id() const { return storage_->node_id; }

  // Deep copy with requires_grad cleared.
  Tensor detach() const;
  bool same_storage(const Tensor& other) const { return storage_ == other.storage_; }

  const std::shared_ptr<TensorStorage>& storage() const { return storage_; }

 private:
  std::shared_ptr<TensorStorage> storage_;
};

}  // namespace ssr
