// SPDX-License-Identifier: Apache-2.0
#include "lrc/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lrc/nn/ops.hpp"
#include "lrc/rng.hpp"

namespace lrc::nn {

namespace {

struct Evaluation {
  double loss = 0.0;
  std::uint64_t branches = 0;
  std::vector<Tensor<double>> grads;
};

Evaluation evaluate(const GraphFn& op, const std::vector<Tensor<double>>& inputs, Tensor<double>& projection,
                    std::uint64_t seed, bool with_grad) {
  Tape<double> tape;
  tape.track_branches(true);
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const auto& in : inputs) vars.push_back(tape.input(in, with_grad));
  const Var out = op(tape, vars);
  if (projection.empty()) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    projection = Tensor<double>(tape.value(out).shape, 1.0);
    // Scalar outputs are checked as-is.
    if (projection.size() > 1)
      for (double& r : projection.data) r = normal(rng);
  }
  const Var loss = weighted_sum(tape, out, projection);
  Evaluation ev;
  ev.loss = tape.value(loss)[0];
  ev.branches = tape.branch_signature();
  if (with_grad) {
    tape.backward(loss);
    for (Var v : vars) ev.grads.push_back(tape.has_grad(v) ? tape.grad(v) : Tensor<double>(tape.value(v).shape));
  }
  return ev;
}

}  // namespace

GradCheckResult grad_check(const GraphFn& op, const std::vector<Tensor<double>>& inputs, double step,
                           std::uint64_t seed, std::size_t max_coords) {
  Tensor<double> projection;
  const Evaluation analytic = evaluate(op, inputs, projection, seed, true);

  GradCheckResult result;
  std::vector<Tensor<double>> probe = inputs;
  Rng pick(splitmix64(seed) ^ 0x5A5A5A5AULL);
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    std::vector<std::size_t> coords(inputs[k].size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (max_coords != 0 && coords.size() > max_coords) {
      std::shuffle(coords.begin(), coords.end(), pick);
      coords.resize(max_coords);
    }
    for (std::size_t i : coords) {
      const double orig = probe[k][i];
      probe[k][i] = orig + step;
      const Evaluation up = evaluate(op, probe, projection, seed, false);
      probe[k][i] = orig - step;
      const Evaluation down = evaluate(op, probe, projection, seed, false);
      probe[k][i] = orig;
      if (up.branches != analytic.branches || down.branches != analytic.branches) {
        ++result.skipped;
        continue;
      }
      const double numeric = (up.loss - down.loss) / (2.0 * step);
      const double a = analytic.grads[k][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
      ++result.coordinates;
    }
  }
  return result;
}

}  // namespace lrc::nn
