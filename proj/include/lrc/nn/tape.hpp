// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <vector>

#include "lrc/nn/tensor.hpp"

namespace lrc::nn {

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  [[nodiscard]] bool valid() const noexcept { return id != static_cast<std::size_t>(-1); }
};

/// Records a static feed-forward computation and replays it in reverse to
/// accumulate gradients. One tape per sample; tapes are not shared across threads.
template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, Var self)>;

  /// A constant or differentiable input owned by the tape.
  Var input(Tensor<T> value, bool requires_grad = false);
  /// A parameter referenced in place; its storage must outlive the tape.
  Var parameter(const Tensor<T>& value, bool requires_grad = true);
  /// Records an op result. `backward` reads grad(self) and accumulates into parents.
  Var push(Tensor<T> value, bool requires_grad, Backward backward);

  [[nodiscard]] const Tensor<T>& value(Var v) const;
  [[nodiscard]] bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  [[nodiscard]] bool any_requires_grad(std::initializer_list<Var> vars) const;

  /// Gradient buffer for v, zero-allocated on first use.
  Tensor<T>& grad(Var v);
  [[nodiscard]] bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  /// Seeds d(root)/d(root) = 1 for a single-element root and runs every recorded backward in reverse.
  void backward(Var root);

  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  /// Piecewise ops (leaky_relu, clamp) fold the branch taken by every element
  /// into a signature while tracking is on. Two evaluations with different
  /// signatures straddle a non-differentiable point.
  void track_branches(bool on) noexcept { tracking_branches_ = on; }
  [[nodiscard]] bool tracking_branches() const noexcept { return tracking_branches_; }
  void mix_branch(std::uint64_t branch) noexcept {
    branch_signature_ = (branch_signature_ ^ branch) * 0x100000001b3ULL + 0x9e3779b97f4a7c15ULL;
  }
  [[nodiscard]] std::uint64_t branch_signature() const noexcept { return branch_signature_; }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* external = nullptr;
    Tensor<T> grad;
    Backward backward;
    bool requires_grad = false;
  };
  std::vector<Node> nodes_;
  bool tracking_branches_ = false;
  std::uint64_t branch_signature_ = 0;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace lrc::nn
