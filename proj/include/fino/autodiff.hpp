#pragma once

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "fino/tensor.hpp"

namespace fino {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  bool requires_grad = false;

  /// grad += g, allocating on first use.
  void accumulate(const Tensor<T>& g);
  void ensure_grad();
};

/// Shared handle to a value in the computation graph.
///
/// Copies alias the same node, so a parameter held by a model and the same
/// parameter captured by a tape see one gradient buffer.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>(Node<T>{std::move(value), {}, requires_grad})) {}

  bool defined() const { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && node_->grad.defined(); }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad; }

  /// Resets the gradient to zeros of the value's shape.
  void zero_grad() {
    node_->grad = Tensor<T>::zeros(node_->value.shape());
  }

  const std::shared_ptr<Node<T>>& node() const { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Ordered record of executed operations. Replays adjoints in exact reverse
/// order; a tape can be consumed by backward() once.
template <typename T>
class Tape {
 public:
  using NodePtr = std::shared_ptr<Node<T>>;

  struct Entry {
    std::string op;
    std::vector<NodePtr> inputs;
    NodePtr output;
    std::function<void()> adjoint;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::string op, std::vector<NodePtr> inputs, NodePtr output, std::function<void()> adjoint);

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded adjoint backwards.
  void backward(const Var<T>& loss);

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Optional hook called with the op name as each adjoint runs (test aid).
  void set_trace(std::function<void(const std::string&)> trace) { trace_ = std::move(trace); }

 private:
  std::vector<Entry> entries_;
  bool consumed_ = false;
  std::function<void(const std::string&)> trace_;
};

extern template struct Node<float>;
extern template struct Node<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace fino
