#include "ssr/numerics/tape.hpp"

#include "ssr/errors.hpp"

namespace ssr {
namespace {

thread_local Tape* g_active_tape = nullptr;

}  // namespace

Tape::~Tape() { clear(); }

std::size_t Tape::record(Node node) {
  const std::size_t id = nodes_.size();
  node.output->node_id = id;
  nodes_.push_back(std::move(node));
  return id;
}

void Tape::backward(const Tensor& loss) {
  const auto id = loss.node_id();
  if (loss.size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  if (!id || *id >= nodes_.size() || nodes_[*id].output != loss.storage()) {
    throw ContractError("backward() loss was not recorded on this tape");
  }
  for (std::size_t i = 0; i <= *id; ++i) nodes_[i].output->grad.resize(0);
  detail::grad_buffer(*nodes_[*id].output).setOnes();
  for (std::size_t i = *id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.output->grad.size() == 0) continue;  // not on a path to the loss
    n.backward(n.output->grad);
  }
}

void Tape::clear() {
  for (auto& n : nodes_) n.output->node_id.reset();
  nodes_.clear();
}

Tape* active_tape() { return g_active_tape; }

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

NoGradScope::NoGradScope() : previous_(g_active_tape) { g_active_tape = nullptr; }
NoGradScope::~NoGradScope() { g_active_tape = previous_; }

namespace detail {

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!g_active_tape) return false;
  for (const Tensor* t : inputs) {
    if (t && t->requires_grad()) return true;
  }
  return false;
}

Vector& grad_buffer(TensorStorage& storage) {
  if (storage.grad.size() != storage.value.size()) storage.grad = Vector::Zero(storage.value.size());
  return storage.grad;
}

void accumulate(TensorStorage& storage, const Vector& grad) {
  if (!storage.requires_grad) return;
  grad_buffer(storage) += grad;
}

void record(const char* op, std::vector<Tensor> inputs, Tensor& out, Tape::BackwardFn fn) {
  Tape::Node node;
  node.op = op;
  node.inputs.reserve(inputs.size());
  for (const auto& t : inputs) node.inputs.push_back(t.storage());
  node.output = out.storage();
  node.backward = std::move(fn);
  out.set_requires_grad(true);
  g_active_tape->record(std::move(node));
}

}  // namespace detail
}  // namespace ssr
