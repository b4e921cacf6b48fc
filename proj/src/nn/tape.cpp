// SPDX-License-Identifier: Apache-2.0
#include "lrc/nn/tape.hpp"

#include <sstream>

namespace lrc::nn {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << ')';
  return os.str();
}

template <typename T>
Var Tape<T>::input(Tensor<T> value, bool requires_grad) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::parameter(const Tensor<T>& value, bool requires_grad) {
  Node n;
  n.external = &value;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::push(Tensor<T> value, bool requires_grad, Backward backward) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
const Tensor<T>& Tape<T>::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.external ? *n.external : n.owned;
}

template <typename T>
bool Tape<T>::any_requires_grad(std::initializer_list<Var> vars) const {
  for (Var v : vars)
    if (v.valid() && nodes_.at(v.id).requires_grad) return true;
  return false;
}

template <typename T>
Tensor<T>& Tape<T>::grad(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty()) n.grad = Tensor<T>(value(v).shape);
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var root) {
  require(value(root).size() == 1, Errc::shape, "backward root must be a scalar");
  grad(root)[0] = T(1);
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, Var{i});
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace lrc::nn
