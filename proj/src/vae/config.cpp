// SPDX-License-Identifier: Apache-2.0
#include "lrc/vae/config.hpp"

#include "lrc/error.hpp"

namespace lrc::vae {

void EncoderConfig::validate() const {
  require(input_bands >= 1, Errc::domain, "input_bands must be >= 1");
  require(stage_channels.size() == 4, Errc::domain, "encoder has exactly four stages");
  for (auto c : stage_channels) require(c >= 1, Errc::domain, "stage widths must be positive");
  require(tile_size >= 16 && tile_size % 16 == 0, Errc::domain, "tile_size must be a positive multiple of 16");
  require(latent_dim >= 1, Errc::domain, "latent_dim must be positive");
  require(!dilation_rates.empty(), Errc::domain, "at least one dilation rate required");
  for (std::size_t i = 0; i < dilation_rates.size(); ++i) {
    require(dilation_rates[i] >= 1, Errc::domain, "dilation rates must be >= 1");
    if (i > 0) require(dilation_rates[i] > dilation_rates[i - 1], Errc::domain, "dilation rates must increase");
  }
  require(beta >= 0.0, Errc::domain, "beta must be non-negative");
  require(lowpass_kernel % 2 == 1 && lowpass_sigma > 0.0, Errc::domain, "invalid low-pass settings");
  require(residual_blocks >= 1, Errc::domain, "residual_blocks must be >= 1");
}

void TrainConfig::validate() const {
  require(learning_rate > 0.0, Errc::domain, "learning_rate must be positive");
  require(batch_size >= 1, Errc::domain, "batch_size must be >= 1");
  require(scale_aug_min > 0.0 && scale_aug_min <= scale_aug_max && scale_aug_max <= 1.0, Errc::domain,
          "scale augmentation range must satisfy 0 < min <= max <= 1");
  require(validation_fraction >= 0.0 && validation_fraction < 1.0, Errc::domain,
          "validation_fraction must be in [0, 1)");
}

void to_json(nlohmann::json& j, const EncoderConfig& c) {
  j = {{"input_bands", c.input_bands},       {"tile_size", c.tile_size},
       {"stage_channels", c.stage_channels}, {"latent_dim", c.latent_dim},
       {"dilation_rates", c.dilation_rates}, {"beta", c.beta},
       {"lowpass_sigma", c.lowpass_sigma},   {"lowpass_kernel", c.lowpass_kernel},
       {"residual_blocks", c.residual_blocks}};
}

void from_json(const nlohmann::json& j, EncoderConfig& c) {
  EncoderConfig d;
  c.input_bands = j.value("input_bands", d.input_bands);
  c.tile_size = j.value("tile_size", d.tile_size);
  c.stage_channels = j.value("stage_channels", d.stage_channels);
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.dilation_rates = j.value("dilation_rates", d.dilation_rates);
  c.beta = j.value("beta", d.beta);
  c.lowpass_sigma = j.value("lowpass_sigma", d.lowpass_sigma);
  c.lowpass_kernel = j.value("lowpass_kernel", d.lowpass_kernel);
  c.residual_blocks = j.value("residual_blocks", d.residual_blocks);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
       {"epochs", c.epochs},               {"scale_aug_min", c.scale_aug_min},
       {"scale_aug_max", c.scale_aug_max}, {"seed", c.seed},
       {"deterministic", c.deterministic}, {"validation_fraction", c.validation_fraction},
       {"threads", c.threads}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.epochs = j.value("epochs", d.epochs);
  c.scale_aug_min = j.value("scale_aug_min", d.scale_aug_min);
  c.scale_aug_max = j.value("scale_aug_max", d.scale_aug_max);
  c.seed = j.value("seed", d.seed);
  c.deterministic = j.value("deterministic", d.deterministic);
  c.validation_fraction = j.value("validation_fraction", d.validation_fraction);
  c.threads = j.value("threads", d.threads);
}

}  // namespace lrc::vae
