#pragma once

#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>

#include "viapt/numerics/tensor.hpp"

namespace viapt {

/// A named tensor owned by a model. Only trainable parameters carry a
/// gradient buffer and receive optimizer updates.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = false;

  Parameter() = default;
  Parameter(std::string name_, Tensor<T> value_, bool trainable_)
      : name(std::move(name_)), value(std::move(value_)), trainable(trainable_) {
    if (trainable) grad = Tensor<T>(value.shape());
  }

  void set_trainable(bool on) {
    trainable = on;
    grad = on ? Tensor<T>(value.shape()) : Tensor<T>();
  }
  void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
class Tape;

/// Handle to a node recorded on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  int id() const noexcept { return id_; }
  Tape<T>& tape() const noexcept { return *tape_; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

/// Single-threaded reverse-mode tape. Nodes are appended in evaluation order;
/// backward() sweeps them in reverse. Nodes that do not depend on a trainable
/// parameter store no backward rule and never allocate gradient storage.
template <typename T>
class Tape {
 public:
  /// Called with the tape, this node's id and its accumulated gradient.
  using BackwardFn = std::function<void(Tape&, int self, const Tensor<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value);
  /// Leaf bound to a parameter; gradients flow back into `p.grad` when it is
  /// trainable.
  Var<T> param(Parameter<T>& p);
  Var<T> record(Tensor<T> value, std::span<const Var<T>> parents, BackwardFn fn);
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> parents, BackwardFn fn) {
    return record(std::move(value), std::span<const Var<T>>(parents.begin(), parents.size()),
                  std::move(fn));
  }

  const Tensor<T>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }

  /// Gradient accumulator for `id`, allocated as zeros on first use.
  /// nullptr when the node does not require a gradient.
  Tensor<T>* grad_slot(int id);

  /// Reverse sweep from a scalar loss. Accumulates (adds) into the grad of
  /// every trainable parameter leaf reached.
  void backward(const Var<T>& loss, T seed = T(1));

  /// Gradient of an arbitrary node after backward(); nullptr if none.
  const Tensor<T>* grad(const Var<T>& v) const;

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    Parameter<T>* param = nullptr;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return tape_->requires_grad(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace viapt
