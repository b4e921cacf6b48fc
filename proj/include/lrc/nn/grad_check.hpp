// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lrc/nn/tape.hpp"

namespace lrc::nn {

/// Builds a graph from the given input vars and returns its output var.
using GraphFn = std::function<Var(Tape<double>&, std::span<const Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  /// Probes whose +/- step crossed a leaky_relu or clamp breakpoint.
  std::size_t skipped = 0;
};

/// Compares reverse-mode gradients with central finite differences.
///
/// Non-scalar outputs are reduced to L = sum(r * y) with fixed N(0, 1)
/// weights r drawn from `seed`, so every output element contributes; scalar
/// outputs are used directly. The
/// relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8). When
/// `max_coords` is non-zero, only that many seeded coordinates per input are
/// probed. Probes that move any piecewise op onto another branch are
/// skipped, since a difference quotient across a kink is not a derivative.
GradCheckResult grad_check(const GraphFn& op, const std::vector<Tensor<double>>& inputs, double step = 1e-4,
                           std::uint64_t seed = 0, std::size_t max_coords = 0);

}  // namespace lrc::nn
