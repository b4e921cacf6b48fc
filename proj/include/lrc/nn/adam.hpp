// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lrc/nn/tensor.hpp"

namespace lrc::nn {

/// A named learnable tensor with its accumulated gradient.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  void zero_grad() { grad = Tensor<T>(value.shape); }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  AdamConfig config;
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::uint64_t step_count = 0;

  /// Zero moments shaped like `params`.
  static AdamState init(std::span<const Parameter<T>> params, AdamConfig cfg = {});
};

/// Bias-corrected Adam update using each parameter's `grad`. Throws
/// Errc::divergence (before touching anything) when a gradient is non-finite.
template <typename T>
void adam_step(std::span<Parameter<T>> params, AdamState<T>& state, double lr = 1e-3);

extern template struct AdamState<float>;
extern template struct AdamState<double>;

}  // namespace lrc::nn
