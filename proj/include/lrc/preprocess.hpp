// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "lrc/raster_io.hpp"

namespace lrc {

/// Per-band gain/offset mapping fine-resolution reflectance onto the reference sensor.
struct SpectralAlignParams {
  std::vector<double> gain;
  std::vector<double> offset;

  static SpectralAlignParams identity(std::size_t bands);
  void validate() const;
  bool operator==(const SpectralAlignParams&) const = default;
};

/// Log-domain robust scaling anchors, one (p1, p99) per band.
struct NormalizationParams {
  double epsilon = 1e-6;
  std::vector<double> p1;
  std::vector<double> p99;

  void validate() const;
  [[nodiscard]] std::size_t bands() const noexcept { return p1.size(); }
  bool operator==(const NormalizationParams&) const = default;
};

/// Everything fitted on the training distribution and reused at inference.
struct PreprocessParams {
  NormalizationParams norm;
  SpectralAlignParams align;
  bool operator==(const PreprocessParams&) const = default;
};

struct LinearFit {
  double gain = 1.0;
  double offset = 0.0;
};

/// Linear interpolation between order statistics at rank (p/100)(n-1).
double percentile(std::span<const double> values, double p);

/// Major-axis (orthogonal) regression of y on x. Symmetric in the sense that
/// fitting x on y gives the reciprocal slope.
LinearFit fit_ma_regression(std::span<const double> x, std::span<const double> y);

SceneRaster apply_spectral_alignment(const SceneRaster& scene, const SpectralAlignParams& params);

NormalizationParams fit_normalization(std::span<const SceneRaster> training_scenes, double epsilon = 1e-6);

/// log(max(x,0)+eps) rescaled so that p1 -> -1 and p99 -> +1, then clipped.
double lognorm_value(double x, double epsilon, double p1, double p99);

Tile apply_lognorm(const Tile& tile, const NormalizationParams& params);
/// Pixel-wise lognorm of a whole scene; nodata pixels keep the sentinel.
SceneRaster apply_lognorm(const SceneRaster& scene, const NormalizationParams& params);

/// Alignment followed by lognorm, the full inference-time preprocessing.
SceneRaster preprocess_scene(const SceneRaster& scene, const PreprocessParams& params);

void save_preprocess_params(const PreprocessParams& params, const std::filesystem::path& path);
PreprocessParams load_preprocess_params(const std::filesystem::path& path);

}  // namespace lrc
