#include "viapt/numerics/autodiff.hpp"

namespace viapt {

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
  nodes_.push_back(Node{p.value, {}, p.trainable, p.trainable ? &p : nullptr, {}});
  return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> value, std::span<const Var<T>> parents, BackwardFn fn) {
  bool needs = false;
  for (const auto& p : parents) {
    if (&p.tape() != this) throw ContractError("operands recorded on different tapes");
    needs = needs || requires_grad(p.id());
  }
  Node node{std::move(value), {}, needs, nullptr, {}};
  if (needs) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Tensor<T>* Tape<T>::grad_slot(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return nullptr;
  if (n.grad.shape() != n.value.shape() || n.grad.size() != n.value.size())
    n.grad = Tensor<T>(n.value.shape());
  return &n.grad;
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss, T seed) {
  if (&loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  const Node& root = nodes_[static_cast<std::size_t>(loss.id())];
  if (root.value.size() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_string(root.value.shape()));
  }
  if (!root.requires_grad) return;
  Tensor<T>* g = grad_slot(loss.id());
  (*g)[0] += seed;
  for (int i = loss.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, i, n.grad);
    } else if (n.param != nullptr) {
      auto& pg = n.param->grad;
      if (pg.shape() != n.value.shape()) pg = Tensor<T>(n.value.shape());
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

template <typename T>
const Tensor<T>* Tape<T>::grad(const Var<T>& v) const {
  const Node& n = nodes_[static_cast<std::size_t>(v.id())];
  if (!n.requires_grad || n.grad.empty()) return nullptr;
  return &n.grad;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace viapt
