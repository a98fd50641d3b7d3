#pragma once

#include "ssr/numerics/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace ssr {

// Define-by-run record of primitive applications. Nodes are appended in
// execution order, so the node list is already topologically sorted.
class Tape {
 public:
  using BackwardFn = std::function<void(const Vector& out_grad)>;

  struct Node {
    const char* op = "";
    std::vector<std::shared_ptr<TensorStorage>> inputs;
    std::shared_ptr<TensorStorage> output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  std::size_t record(Node node);
  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  // Seeds d(loss)/d(loss) = 1 and walks nodes in reverse. Every leaf with
  // requires_grad accumulates its gradient in Tensor::grad(). Each node is
  // visited once; fan-out is handled by accumulation into shared buffers.
  void backward(const Tensor& loss);

  void clear();

 private:
  std::vector<Node> nodes_;
};

// Tape the primitives on the current thread record into, or nullptr.
Tape* active_tape();

// Makes `tape` the active tape of this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

// Suspends recording on this thread (finite-difference probes, inference).
class NoGradScope {
 public:
  NoGradScope();
  ~NoGradScope();
  NoGradScope(const NoGradScope&) = delete;
  NoGradScope& operator=(const NoGradScope&) = delete;

 private:
  Tape* previous_;
};

namespace detail {

// True when a primitive with these inputs must be recorded.
bool should_record(std::initializer_list<const Tensor*> inputs);

// Adds `grad` into the storage's gradient buffer, allocating it on first use.
void accumulate(TensorStorage& storage, const Vector& grad);
Vector& grad_buffer(TensorStorage& storage);

// Records a node producing `out` from `inputs`; `out` becomes requires_grad.
void record(const char* op, std::vector<Tensor> inputs, Tensor& out, Tape::BackwardFn fn);

}  // namespace detail

}  // namespace ssr
