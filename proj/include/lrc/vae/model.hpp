// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "lrc/nn/adam.hpp"
#include "lrc/nn/tape.hpp"
#include "lrc/raster_io.hpp"
#include "lrc/rng.hpp"
#include "lrc/vae/config.hpp"

namespace lrc::vae {

inline constexpr double kLogVarMin = -10.0;
inline constexpr double kLogVarMax = 10.0;

/// All learnable tensors of the model, in a fixed order determined by the config.
template <typename T>
struct VaeParams {
  EncoderConfig config;
  std::uint64_t seed = 0;
  std::vector<nn::Parameter<T>> params;

  /// Seeded initialization; Kaiming-normal convs, unit norm scales, zero biases.
  static VaeParams init(const EncoderConfig& config, std::uint64_t seed);

  [[nodiscard]] std::size_t index_of(std::string_view name) const;
  [[nodiscard]] const nn::Parameter<T>& operator[](std::string_view name) const { return params[index_of(name)]; }
  nn::Parameter<T>& operator[](std::string_view name) { return params[index_of(name)]; }
  [[nodiscard]] std::size_t scalar_count() const;

  template <typename U>
  [[nodiscard]] VaeParams<U> cast() const {
    VaeParams<U> out;
    out.config = config;
    out.seed = seed;
    for (const auto& p : params) out.params.push_back({p.name, p.value.template cast<U>(), {}});
    out.rebuild_index();
    return out;
  }

  void rebuild_index();

 private:
  std::unordered_map<std::string, std::size_t> index_;
};

/// Names and shapes of every parameter for a config, in storage order.
std::vector<std::pair<std::string, nn::Shape>> parameter_manifest(const EncoderConfig& config);

struct LatentPosterior {
  std::vector<double> mu;
  std::vector<double> log_var;
};

struct LossTerms {
  double total = 0.0;
  double recon_mse = 0.0;
  double kl = 0.0;
};

/// Low/high split of a tile with low + high == input exactly.
struct FreqParts {
  nn::Tensor<double> low;
  nn::Tensor<double> high;
};

/// (C, S, S) tensor view of a tile's values.
template <typename T>
nn::Tensor<T> tile_tensor(const Tile& tile);

/// Gaussian low-pass plus high-pass residual. The low-pass output is rounded
/// to a 2^-24 grid so that the residual subtraction is exact in double.
FreqParts freq_decompose(const nn::Tensor<double>& tile, std::size_t kernel_size = 5, double sigma = 1.0);
FreqParts freq_decompose(const Tile& tile, std::size_t kernel_size = 5, double sigma = 1.0);

/// concat(low, high) as the 2C-channel encoder input.
template <typename T>
nn::Tensor<T> encoder_input(const nn::Tensor<T>& tile, const EncoderConfig& config);

/// Model parameters bound to tape vars for one forward pass.
template <typename T>
class Bound {
 public:
  /// Binds by reference (training, inference).
  Bound(nn::Tape<T>& tape, const VaeParams<T>& params, bool requires_grad);
  /// Binds to caller-provided vars, one per parameter in storage order.
  Bound(nn::Tape<T>& tape, const VaeParams<T>& params, std::vector<nn::Var> vars);

  nn::Var operator()(std::string_view name) const { return vars_[params_.index_of(name)]; }
  nn::Tape<T>& tape() const { return tape_; }
  const EncoderConfig& config() const { return params_.config; }
  const std::vector<nn::Var>& vars() const { return vars_; }

 private:
  nn::Tape<T>& tape_;
  const VaeParams<T>& params_;
  std::vector<nn::Var> vars_;
};

struct EncodeVars {
  nn::Var mu;
  nn::Var log_var;
  /// Spatial size after each of the four stages.
  std::vector<std::size_t> stage_sizes;
};

template <typename T>
EncodeVars encode_graph(const Bound<T>& b, nn::Var encoder_in);

template <typename T>
nn::Var decode_graph(const Bound<T>& b, nn::Var z);

/// Posterior for one normalized tile; log_var clamped to [-10, 10].
template <typename T>
LatentPosterior encode(const Tile& tile, const VaeParams<T>& params);

template <typename T>
nn::Tensor<T> decode(std::span<const double> z, const VaeParams<T>& params);

/// z = mu + exp(log_var / 2) * eta, eta ~ N(0, I).
std::vector<double> reparameterize(const LatentPosterior& post, Rng& rng);

/// recon_mse = mean squared error; kl = 0.5 * sum(mu^2 + exp(lv) - 1 - lv).
LossTerms vae_loss(std::span<const double> tile, std::span<const double> reconstruction,
                   const LatentPosterior& post, double beta);

/// Full per-sample objective on a tape: encode, clamp, sample with the given
/// noise, decode, and combine. Returns the scalar total.
template <typename T>
nn::Var sample_objective(const Bound<T>& b, const nn::Tensor<T>& tile, const nn::Tensor<T>& noise,
                         LossTerms* terms = nullptr);

/// Bilinear resample of a square tile to out_size (half-pixel centres, edge clamp).
Tile resample_bilinear(const Tile& tile, std::size_t out_size);
/// Down to round(size * s) and back up.
Tile scale_augment(const Tile& tile, double s);
Tile scale_augment(const Tile& tile, Rng& rng, double scale_min, double scale_max);

}  // namespace lrc::vae
