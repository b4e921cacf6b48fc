// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "lrc/raster_io.hpp"
#include "lrc/rng.hpp"

namespace lrc {

inline constexpr float kSynthNodata = -9999.0f;

struct SynthConfig {
  std::size_t width = 256;
  std::size_t height = 256;
  std::size_t bands = 4;
  std::size_t n_burns = 3;
  double burn_visible_gain = 0.4;
  double burn_nir_gain = 0.3;
  double burn_texture_sigma = 0.02;
  double nuisance_gain_min = 0.9;
  double nuisance_gain_max = 1.1;
  double noise_sigma = 0.01;
  std::size_t misregistration_px = 0;
  double target_prevalence = 0.08;
  double theta = 0.25;
  std::size_t tile_size = kDefaultTileSize;
  /// Correlation length of the background field, in pixels.
  double field_scale = 4.0;
  /// Extra pre-incident acquisitions for time-series scoring.
  std::size_t n_history = 0;
  std::uint64_t seed = 7;

  void validate() const;
  [[nodiscard]] std::size_t tile_rows() const { return height / tile_size; }
  [[nodiscard]] std::size_t tile_cols() const { return width / tile_size; }
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

struct SceneLabels {
  std::size_t rows = 0;
  std::size_t cols = 0;
  double theta = 0.25;
  std::vector<bool> labels;
  std::vector<double> burned_fraction;

  [[nodiscard]] std::size_t positives() const;
};

struct Ellipse {
  double cx = 0.0;
  double cy = 0.0;
  double semi_a = 1.0;
  double semi_b = 1.0;
  double angle = 0.0;  ///< radians

  [[nodiscard]] bool contains(double x, double y) const;
  [[nodiscard]] double area() const;
};

/// Per-pixel burned flags, row-major.
using PixelMask = std::vector<unsigned char>;

struct ScenePair {
  SceneRaster pre;
  SceneRaster post;
  SceneLabels labels;
  /// Additional pre-incident acquisitions (empty unless n_history > 0).
  std::vector<SceneRaster> history;
};

/// Band names for the supported sensors (4 or 8 bands).
std::vector<std::string> synth_band_names(std::size_t bands);

/// Smooth, inter-band correlated background in [0.05, 0.6].
SceneRaster gen_background(const SynthConfig& cfg, Rng& rng);

/// Darkens the region in place and returns its exact pixel mask. Bands named
/// "nir" or "red_edge" take the NIR gain. Texture noise is added only to bands
/// whose gain is below 1.
PixelMask inject_burn(SceneRaster& scene, const Ellipse& region, const SynthConfig& cfg, Rng& rng);

/// Per-band gain, integer shift (vacated border set to nodata), additive noise.
/// The shift is reported so masks can follow the scene.
struct NuisanceShift {
  long dx = 0;
  long dy = 0;
};
SceneRaster inject_nuisance(const SceneRaster& scene, const SynthConfig& cfg, Rng& rng,
                            NuisanceShift* shift = nullptr);

PixelMask shift_mask(const PixelMask& mask, std::size_t width, std::size_t height, NuisanceShift s);

SceneLabels labels_from_mask(const PixelMask& mask, std::size_t width, std::size_t height, std::size_t tile_size,
                             double theta);

ScenePair gen_scene_pair(const SynthConfig& cfg);

/// Burn-free scene drawn from the same background distribution, for training
/// and threshold calibration. Each index is an independent acquisition.
SceneRaster gen_nominal_scene(const SynthConfig& cfg, std::size_t index);

void save_labels(const SceneLabels& labels, const std::filesystem::path& path);
SceneLabels load_labels(const std::filesystem::path& path);

}  // namespace lrc
