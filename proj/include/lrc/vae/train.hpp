// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "lrc/error.hpp"
#include "lrc/vae/model.hpp"

namespace lrc::vae {

struct EpochRecord {
  std::size_t epoch = 0;
  LossTerms train;
  LossTerms validation;
};

/// Trained (or freshly initialized) fast-mode parameters and loss history.
struct Checkpoint {
  VaeParams<float> params;
  TrainConfig train_config;
  std::vector<EpochRecord> history;
  /// 1-based epoch whose parameters were kept; 0 when untrained.
  std::size_t best_epoch = 0;
};

/// Raised when a loss or gradient goes non-finite; carries the epochs completed so far.
class TrainingDiverged : public Error {
 public:
  TrainingDiverged(const std::string& what, std::vector<EpochRecord> history)
      : Error(Errc::divergence, what), history_(std::move(history)) {}
  [[nodiscard]] const std::vector<EpochRecord>& history() const noexcept { return history_; }

 private:
  std::vector<EpochRecord> history_;
};

/// Validation objective: posterior mean decoded (no sampling), averaged over tiles.
LossTerms evaluate_loss(const VaeParams<float>& params, std::span<const Tile> tiles, std::size_t threads = 1);

/// Seeded mini-batch training with scale augmentation and Adam. When
/// `validation` is empty a `validation_fraction` hold-out is split off
/// `tiles`. Returns the parameters of the best validation epoch.
Checkpoint train(std::span<const Tile> tiles, std::span<const Tile> validation, const EncoderConfig& config,
                 const TrainConfig& train_config);

/// Magic, embedded JSON (configs, manifest, history), then little-endian
/// float32 parameters in manifest order.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Fails with Errc::checkpoint on corruption, or when `expected_bands` is
/// given and differs from the embedded config.
Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::size_t> expected_bands = {});

/// One CSV row per epoch.
void save_loss_history(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

}  // namespace lrc::vae
