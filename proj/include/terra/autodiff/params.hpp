#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "terra/autodiff/tape.hpp"

namespace terra::ad {

template <typename T>
struct Parameter {
  Tensor<T> value;
  bool trainable = true;
};

/// Named parameters with unique names, iterated in name order.
template <typename T>
class BasicParameterSet {
 public:
  using Map = std::map<std::string, Parameter<T>, std::less<>>;

  void add(const std::string& name, Tensor<T> value, bool trainable = true) {
    if (params_.contains(name)) throw InvalidArgument("duplicate parameter name '" + name + "'");
    params_.emplace(name, Parameter<T>{std::move(value), trainable});
  }

  bool contains(std::string_view name) const { return params_.find(name) != params_.end(); }

  const Parameter<T>& at(std::string_view name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw InvalidArgument("unknown parameter '" + std::string(name) + "'");
    return it->second;
  }
  Parameter<T>& at(std::string_view name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw InvalidArgument("unknown parameter '" + std::string(name) + "'");
    return it->second;
  }

  /// Marks every parameter whose name starts with `prefix`.
  void set_trainable(std::string_view prefix, bool trainable) {
    for (auto& [name, p] : params_)
      if (name.starts_with(prefix)) p.trainable = trainable;
  }

  /// Moves all parameters of `other` in under `prefix`.
  void merge(const BasicParameterSet& other, const std::string& prefix = "") {
    for (const auto& [name, p] : other.params_) add(prefix + name, p.value, p.trainable);
  }

  /// Parameters under `prefix`, with the prefix stripped.
  BasicParameterSet extract(std::string_view prefix) const {
    BasicParameterSet out;
    for (const auto& [name, p] : params_)
      if (name.starts_with(prefix)) out.add(name.substr(prefix.size()), p.value, p.trainable);
    return out;
  }

  size_t size() const { return params_.size(); }
  int64_t element_count() const {
    int64_t n = 0;
    for (const auto& [name, p] : params_) n += p.value.numel();
    return n;
  }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, p] : params_) out.push_back(name);
    return out;
  }

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  friend bool operator==(const BasicParameterSet& a, const BasicParameterSet& b) {
    if (a.params_.size() != b.params_.size()) return false;
    auto ib = b.params_.begin();
    for (const auto& [name, p] : a.params_) {
      if (name != ib->first || p.trainable != ib->second.trainable || !(p.value == ib->second.value)) return false;
      ++ib;
    }
    return true;
  }

 private:
  Map params_;
};

using ParameterSet = BasicParameterSet<float>;

template <typename T>
using GradMap = std::map<std::string, Tensor<T>, std::less<>>;

/// Lazily places parameters on a tape: trainable ones as gradient leaves,
/// frozen ones as constants. Each parameter is bound at most once per tape.
template <typename T>
class Binder {
 public:
  Binder(Tape<T>& tape, const BasicParameterSet<T>& params) : tape_(tape), params_(params) {}

  Var<T> operator()(std::string_view name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const Parameter<T>& p = params_.at(name);
    Var<T> v = p.trainable ? tape_.variable(p.value) : tape_.constant(p.value);
    bound_.emplace(std::string(name), v);
    return v;
  }

  Tape<T>& tape() { return tape_; }
  const BasicParameterSet<T>& params() const { return params_; }
  const std::map<std::string, Var<T>, std::less<>>& bound() const { return bound_; }

 private:
  Tape<T>& tape_;
  const BasicParameterSet<T>& params_;
  std::map<std::string, Var<T>, std::less<>> bound_;
};

/// Differentiates `loss` and returns a gradient for every trainable
/// parameter; parameters the loss does not reach get zeros.
template <typename T>
GradMap<T> backward(Binder<T>& binder, const Var<T>& loss) {
  binder.tape().backward(loss);
  GradMap<T> grads;
  for (const auto& [name, p] : binder.params()) {
    if (!p.trainable) continue;
    auto it = binder.bound().find(name);
    grads.emplace(name, it == binder.bound().end() ? Tensor<T>(p.value.shape()) : binder.tape().grad(it->second));
  }
  return grads;
}

}  // namespace terra::ad
