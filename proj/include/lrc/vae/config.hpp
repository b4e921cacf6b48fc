// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

namespace lrc::vae {

struct EncoderConfig {
  std::size_t input_bands = 4;
  std::size_t tile_size = 32;
  std::vector<std::size_t> stage_channels{32, 64, 128, 256};
  std::size_t latent_dim = 128;
  std::vector<std::size_t> dilation_rates{1, 2, 4};
  double beta = 1.0;
  double lowpass_sigma = 1.0;
  std::size_t lowpass_kernel = 5;
  /// Residual blocks in each of the two deep stages.
  std::size_t residual_blocks = 1;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  double scale_aug_min = 0.3;
  double scale_aug_max = 1.0;
  std::uint64_t seed = 7;
  bool deterministic = true;
  /// Hold-out share used when no explicit validation tiles are given.
  double validation_fraction = 0.1;
  std::size_t threads = 1;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);
void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace lrc::vae
