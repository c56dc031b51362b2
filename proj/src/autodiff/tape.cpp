#include "terra/autodiff/tape.hpp"

namespace terra::ad {

template <typename T>
void Tape<T>::check_owner(const Var<T>& v) const {
  if (v.tape() != this) throw InvalidArgument("variable belongs to a different tape");
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::variable(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = grad_enabled_;
  n.op = "variable";
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Var<T> Tape<T>::record(const char* op, Tensor<T> value, const std::vector<Var<T>>& parents,
                       BackwardFn backward) {
  if (consumed_) throw InvalidArgument("tape already consumed by backward()");
  if (!value.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op);
  Node n;
  n.value = std::move(value);
  n.op = op;
  for (const auto& p : parents) {
    check_owner(p);
    if (requires_grad(p.id())) n.requires_grad = true;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var<T>(this, static_cast<int>(nodes_.size() - 1));
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(int id) {
  Node& n = nodes_.at(static_cast<size_t>(id));
  if (!n.has_grad) {
    n.grad = Tensor<T>(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

template <typename T>
Tensor<T> Tape<T>::grad(const Var<T>& v) const {
  check_owner(v);
  const Node& n = nodes_.at(static_cast<size_t>(v.id()));
  if (!n.has_grad) return Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  check_owner(loss);
  if (consumed_) throw InvalidArgument("tape already consumed by backward()");
  if (loss.value().numel() != 1) {
    throw InvalidArgument("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  consumed_ = true;
  if (!requires_grad(loss.id())) return;
  grad_buffer(loss.id())[0] = T{1};
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
  for (const Node& n : nodes_) {
    if (n.has_grad && !n.grad.all_finite())
      throw NumericError(std::string("non-finite gradient at ") + n.op);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace terra::ad
