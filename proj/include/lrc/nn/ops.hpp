// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "lrc/nn/tape.hpp"

namespace lrc::nn {

enum class Padding { zero_same, valid };

struct ConvSpec {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  Padding padding = Padding::zero_same;
};

inline constexpr double kNormEpsilon = 1e-5;
inline constexpr double kLeakySlope = 0.01;

/// Cross-correlation of a (Cin, H, W) input with a (Cout, Cin, k, k) kernel.
/// `bias` (Cout) is optional; pass a default Var to omit it.
template <typename T>
Var conv2d(Tape<T>& tape, Var input, Var kernel, Var bias, ConvSpec spec = {});

/// Normalized k x k sampled Gaussian (row-major), built from the outer
/// product of a normalized 1-D kernel.
std::vector<double> gaussian_kernel(std::size_t size, double sigma);

/// ([1,2,1] outer [1,2,1]) / 16.
std::vector<double> binomial3_kernel();

/// Depthwise filtering with a fixed k x k kernel and reflect padding,
/// followed by subsampling at even indices when stride = 2.
template <typename T>
Var depthwise_reflect(Tape<T>& tape, Var input, const std::vector<double>& kernel, std::size_t stride);

template <typename T>
Var gaussian_lowpass(Tape<T>& tape, Var input, std::size_t kernel_size = 5, double sigma = 1.0);

/// Fixed binomial blur then stride-2 subsampling; requires even H and W.
template <typename T>
Var blurpool_downsample(Tape<T>& tape, Var input);

template <typename T>
Var leaky_relu(Tape<T>& tape, Var input, double slope = kLeakySlope);

/// Per-channel centering and scaling by sqrt(var + 1e-5), without affine.
template <typename T>
Var normalize_channels(Tape<T>& tape, Var input);

/// Per-channel y = gamma[c] * x + beta[c].
template <typename T>
Var channel_affine(Tape<T>& tape, Var input, Var gamma, Var beta);

template <typename T>
Var channel_norm(Tape<T>& tape, Var input, Var gamma, Var beta) {
  return channel_affine(tape, normalize_channels(tape, input), gamma, beta);
}

/// weights (out, in) times a length-`in` input, plus bias (out).
template <typename T>
Var linear(Tape<T>& tape, Var input, Var weights, Var bias);

template <typename T>
Var nn_upsample(Tape<T>& tape, Var input, std::size_t factor = 2);

/// (C, H, W) -> (C) spatial mean.
template <typename T>
Var global_avg_pool(Tape<T>& tape, Var input);

template <typename T>
Var add(Tape<T>& tape, Var a, Var b);

/// a + weight * b for same-shape inputs.
template <typename T>
Var add_scaled(Tape<T>& tape, Var a, Var b, double weight);

template <typename T>
Var concat_channels(Tape<T>& tape, Var a, Var b);

template <typename T>
Var reshape(Tape<T>& tape, Var input, Shape shape);

/// Element-wise clamp; gradient passes only strictly inside (lo, hi).
template <typename T>
Var clamp(Tape<T>& tape, Var input, double lo, double hi);

/// Mean squared error against a constant target; returns a scalar.
template <typename T>
Var mse(Tape<T>& tape, Var prediction, const Tensor<T>& target);

/// 0.5 * sum(mu^2 + exp(lv) - 1 - lv); returns a scalar.
template <typename T>
Var kl_standard_normal(Tape<T>& tape, Var mu, Var log_var);

/// mu + exp(log_var / 2) * noise with the noise held fixed.
template <typename T>
Var reparameterize(Tape<T>& tape, Var mu, Var log_var, const Tensor<T>& noise);

/// sum(weights * input); used to project non-scalar outputs for gradient checks.
template <typename T>
Var weighted_sum(Tape<T>& tape, Var input, const Tensor<T>& weights);

}  // namespace lrc::nn
