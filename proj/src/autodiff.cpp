#include "fino/autodiff.hpp"

namespace fino {

template <typename T>
void Node<T>::ensure_grad() {
  if (!grad.defined()) grad = Tensor<T>::zeros(value.shape());
}

template <typename T>
void Node<T>::accumulate(const Tensor<T>& g) {
  if (g.shape() != value.shape()) {
    throw ShapeError("gradient shape " + shape_str(g.shape()) + " does not match value shape " +
                     shape_str(value.shape()));
  }
  if (!grad.defined()) {
    grad = g;
    return;
  }
  T* dst = grad.ptr();
  const T* src = g.ptr();
  for (std::size_t i = 0, n = g.size(); i < n; ++i) dst[i] += src[i];
}

template <typename T>
void Tape<T>::record(std::string op, std::vector<NodePtr> inputs, NodePtr output, std::function<void()> adjoint) {
  if (consumed_) throw AutodiffError("cannot record '" + op + "' on a tape that has already run backward");
  entries_.push_back(Entry{std::move(op), std::move(inputs), std::move(output), std::move(adjoint)});
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (consumed_) throw AutodiffError("backward called twice on the same tape; re-record the forward pass");
  if (!loss.defined() || loss.value().size() != 1) {
    throw AutodiffError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) throw AutodiffError("loss does not depend on any tensor requiring gradients");
  consumed_ = true;

  // Every requires_grad input reached by the graph gets a gradient buffer,
  // even when its adjoint contribution turns out to be zero.
  for (const auto& e : entries_) {
    for (const auto& in : e.inputs) {
      if (in && in->requires_grad) in->ensure_grad();
    }
  }
  loss.node()->accumulate(Tensor<T>::scalar(T(1)).reshaped(loss.shape()));
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (!it->output->grad.defined()) continue;
    if (trace_) trace_(it->op);
    it->adjoint();
  }
}

template struct Node<float>;
template struct Node<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace fino
