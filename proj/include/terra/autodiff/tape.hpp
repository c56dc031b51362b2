#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "terra/autodiff/tensor.hpp"

namespace terra::ad {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
template <typename T>
class Var {
 public:
  Var() = default;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;
  Tape<T>* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

/// Define-by-run reverse-mode tape. Each op appends a node holding its value
/// and a closure that pushes the output gradient to its parents. A tape can
/// be differentiated once.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& out_grad)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var<T> constant(Tensor<T> value);
  /// Leaf that accumulates a gradient (when the tape has gradients enabled).
  Var<T> variable(Tensor<T> value);

  /// Appends an op result. `backward` is kept only if some parent needs a
  /// gradient. Throws NumericError when `value` holds NaN/Inf.
  Var<T> record(const char* op, Tensor<T> value, const std::vector<Var<T>>& parents,
                BackwardFn backward);

  void backward(const Var<T>& loss);

  bool consumed() const { return consumed_; }

  const Tensor<T>& value(int id) const { return nodes_.at(static_cast<size_t>(id)).value; }
  bool requires_grad(int id) const { return nodes_.at(static_cast<size_t>(id)).requires_grad; }

  /// Accumulated gradient; a zero tensor when none reached this node.
  Tensor<T> grad(const Var<T>& v) const;

  /// Mutable gradient buffer for backward closures (zero-initialized on first use).
  Tensor<T>& grad_buffer(int id);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    bool has_grad = false;
    BackwardFn backward;
    const char* op = "";
  };

  void check_owner(const Var<T>& v) const;

  std::deque<Node> nodes_;
  bool grad_enabled_;
  bool consumed_ = false;
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

}  // namespace terra::ad
