// SPDX-License-Identifier: Apache-2.0
// Finite-difference cases covering every differentiable kernel.
#pragma once

#include <string>
#include <vector>

#include "helpers.hpp"
#include "lrc/nn/grad_check.hpp"
#include "lrc/nn/ops.hpp"
#include "lrc/vae/model.hpp"

namespace lrc::test {

struct GradCase {
  std::string name;
  nn::GraphFn fn;
  std::vector<nn::Tensor<double>> inputs;
};

/// Values in [0.1, 1] with random sign, so piecewise ops stay off their kinks.
inline nn::Tensor<double> off_zero_tensor(const nn::Shape& shape, std::uint64_t seed) {
  nn::Tensor<double> t = random_tensor(shape, seed, 0.1, 1.0);
  Rng rng(seed ^ 0x5bd1e995ULL);
  std::bernoulli_distribution flip(0.5);
  for (double& v : t.data)
    if (flip(rng)) v = -v;
  return t;
}

inline std::vector<GradCase> grad_cases(std::uint64_t seed) {
  using nn::Tape;
  using nn::Var;
  using Span = std::span<const Var>;
  std::vector<GradCase> cases;
  auto conv = [&](std::string name, nn::ConvSpec spec, std::size_t ks, std::size_t h) {
    cases.push_back({std::move(name),
                     [spec](Tape<double>& t, Span v) { return nn::conv2d(t, v[0], v[1], v[2], spec); },
                     {random_tensor({4, h, h}, seed + 1), random_tensor({3, 4, ks, ks}, seed + 2),
                      random_tensor({3}, seed + 3)}});
  };
  conv("conv2d same", {1, 1, nn::Padding::zero_same}, 3, 8);
  conv("conv2d dilated", {1, 2, nn::Padding::zero_same}, 3, 8);
  conv("conv2d dilation 4", {1, 4, nn::Padding::zero_same}, 3, 8);
  conv("conv2d stride 2", {2, 1, nn::Padding::zero_same}, 3, 8);
  conv("conv2d valid", {1, 1, nn::Padding::valid}, 3, 8);
  conv("conv2d 1x1", {1, 1, nn::Padding::zero_same}, 1, 6);
  cases.push_back({"conv2d no bias",
                   [](Tape<double>& t, Span v) { return nn::conv2d(t, v[0], v[1], Var{}); },
                   {random_tensor({2, 6, 6}, seed + 4), random_tensor({2, 2, 3, 3}, seed + 5)}});
  cases.push_back({"gaussian_lowpass",
                   [](Tape<double>& t, Span v) { return nn::gaussian_lowpass(t, v[0]); },
                   {random_tensor({3, 8, 8}, seed + 6)}});
  cases.push_back({"blurpool_downsample",
                   [](Tape<double>& t, Span v) { return nn::blurpool_downsample(t, v[0]); },
                   {random_tensor({3, 8, 8}, seed + 7)}});
  cases.push_back({"leaky_relu",
                   [](Tape<double>& t, Span v) { return nn::leaky_relu(t, v[0]); },
                   {off_zero_tensor({3, 5, 5}, seed + 8)}});
  cases.push_back({"normalize_channels",
                   [](Tape<double>& t, Span v) { return nn::normalize_channels(t, v[0]); },
                   {random_tensor({3, 5, 5}, seed + 9)}});
  cases.push_back({"channel_norm",
                   [](Tape<double>& t, Span v) { return nn::channel_norm(t, v[0], v[1], v[2]); },
                   {random_tensor({3, 5, 5}, seed + 10), random_tensor({3}, seed + 11, 0.5, 1.5),
                    random_tensor({3}, seed + 12)}});
  cases.push_back({"linear",
                   [](Tape<double>& t, Span v) { return nn::linear(t, v[0], v[1], v[2]); },
                   {random_tensor({7}, seed + 13), random_tensor({5, 7}, seed + 14), random_tensor({5}, seed + 15)}});
  cases.push_back({"nn_upsample",
                   [](Tape<double>& t, Span v) { return nn::nn_upsample(t, v[0]); },
                   {random_tensor({2, 4, 4}, seed + 16)}});
  cases.push_back({"global_avg_pool",
                   [](Tape<double>& t, Span v) { return nn::global_avg_pool(t, v[0]); },
                   {random_tensor({3, 4, 4}, seed + 17)}});
  cases.push_back({"add", [](Tape<double>& t, Span v) { return nn::add(t, v[0], v[1]); },
                   {random_tensor({2, 3, 3}, seed + 18), random_tensor({2, 3, 3}, seed + 19)}});
  cases.push_back({"add_scaled", [](Tape<double>& t, Span v) { return nn::add_scaled(t, v[0], v[1], 0.7); },
                   {random_tensor({2, 3, 3}, seed + 20), random_tensor({2, 3, 3}, seed + 21)}});
  cases.push_back({"concat_channels",
                   [](Tape<double>& t, Span v) { return nn::concat_channels(t, v[0], v[1]); },
                   {random_tensor({2, 3, 3}, seed + 22), random_tensor({1, 3, 3}, seed + 23)}});
  cases.push_back({"reshape", [](Tape<double>& t, Span v) { return nn::reshape(t, v[0], {2, 3, 2}); },
                   {random_tensor({12}, seed + 24)}});
  cases.push_back({"clamp", [](Tape<double>& t, Span v) { return nn::clamp(t, v[0], -0.5, 0.5); },
                   {off_zero_tensor({20}, seed + 25)}});
  const nn::Tensor<double> target = random_tensor({2, 4, 4}, seed + 26);
  cases.push_back({"mse", [target](Tape<double>& t, Span v) { return nn::mse(t, v[0], target); },
                   {random_tensor({2, 4, 4}, seed + 27)}});
  cases.push_back({"kl_standard_normal",
                   [](Tape<double>& t, Span v) { return nn::kl_standard_normal(t, v[0], v[1]); },
                   {random_tensor({8}, seed + 28), random_tensor({8}, seed + 29, -2.0, 2.0)}});
  const nn::Tensor<double> noise = random_tensor({8}, seed + 30, -2.0, 2.0);
  cases.push_back({"reparameterize",
                   [noise](Tape<double>& t, Span v) { return nn::reparameterize(t, v[0], v[1], noise); },
                   {random_tensor({8}, seed + 31), random_tensor({8}, seed + 32, -2.0, 2.0)}});
  const nn::Tensor<double> weights = random_tensor({2, 3, 3}, seed + 33);
  cases.push_back({"weighted_sum",
                   [weights](Tape<double>& t, Span v) { return nn::weighted_sum(t, v[0], weights); },
                   {random_tensor({2, 3, 3}, seed + 34)}});
  return cases;
}

/// Reduced-width model for end-to-end checks: 32 px tiles, narrow stages.
inline vae::EncoderConfig reduced_config(std::size_t bands = 2) {
  vae::EncoderConfig c;
  c.input_bands = bands;
  c.tile_size = 32;
  c.stage_channels = {3, 3, 4, 4};
  c.latent_dim = 4;
  return c;
}

/// Finite-difference check of the batch-mean objective over a 2-tile batch with
/// respect to every model parameter.
inline nn::GradCheckResult vae_loss_grad_check(std::uint64_t seed, std::size_t max_coords = 0) {
  const vae::EncoderConfig config = reduced_config();
  const auto params = vae::VaeParams<double>::init(config, seed);
  std::vector<nn::Tensor<double>> tiles, noise;
  for (std::uint64_t i = 0; i < 2; ++i) {
    tiles.push_back(random_tensor({config.input_bands, 32, 32}, seed + 10 + i, -0.5, 0.5));
    noise.push_back(random_tensor({config.latent_dim}, seed + 20 + i, -1.0, 1.0));
  }
  std::vector<nn::Tensor<double>> inputs;
  for (const auto& p : params.params) inputs.push_back(p.value);
  auto fn = [&](nn::Tape<double>& t, std::span<const nn::Var> vars) {
    const vae::Bound<double> b(t, params, std::vector<nn::Var>(vars.begin(), vars.end()));
    nn::Var total = vae::sample_objective(b, tiles[0], noise[0]);
    for (std::size_t i = 1; i < tiles.size(); ++i) total = nn::add(t, total, vae::sample_objective(b, tiles[i], noise[i]));
    return nn::add_scaled(t, t.input(nn::Tensor<double>({1})), total, 1.0 / static_cast<double>(tiles.size()));
  };
  return nn::grad_check(fn, inputs, 1e-4, seed, max_coords);
}

}  // namespace lrc::test
