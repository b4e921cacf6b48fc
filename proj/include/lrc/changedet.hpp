// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "lrc/raster_io.hpp"
#include "lrc/score_map.hpp"
#include "lrc/vae/model.hpp"

namespace lrc {

/// 1 - cos(u, v), in [0, 2]. Zero-norm inputs are an Errc::degenerate error.
double cosine_distance(std::span<const double> u, std::span<const double> v);

/// Posterior mean of a preprocessed tile.
std::vector<double> embed_tile(const Tile& tile, const vae::VaeParams<float>& params);

/// Latent cosine distance; in time-series mode the minimum over pre_history.
double lrc_score(const TilePair& pair, const vae::VaeParams<float>& params);

/// Cosine distance of flattened tiles after shifting [-1, 1] data by +1.
double pixel_cosine_score(const TilePair& pair);

enum class CvaAggregate { mean, max };

/// Per-pixel Euclidean magnitude of (post - pre), aggregated over the tile.
double cva_score(const TilePair& pair, CvaAggregate agg = CvaAggregate::mean);

/// Upper tail of the chi-square distribution, Q(k/2, x/2).
double chi2_sf(double x, double dof);

struct IrmadOptions {
  std::size_t max_iter = 30;
  double tol = 1e-6;
  /// Pixels used for fitting; larger scenes are subsampled (seeded). 0 = all.
  std::size_t max_pixels = 200000;
  std::uint64_t seed = 0;
};

struct IrmadModel {
  std::size_t bands = 0;
  std::vector<double> mean_pre;
  std::vector<double> mean_post;
  /// Canonical vectors, one row-major C-vector per variate, sorted by rho descending.
  std::vector<std::vector<double>> a;
  std::vector<std::vector<double>> b;
  std::vector<double> rho;
  /// 2 (1 - rho_k), floored at 2 * kMinMadGap.
  std::vector<double> mad_variance;
  /// Whether the covariance ridge had to be applied in the last iteration.
  bool ridge_applied = false;
  std::size_t iterations_used = 0;
  bool converged = false;
  double last_delta = 0.0;

  /// Chi-square no-change statistic sum_k (M_k / sigma_k)^2 for one pixel.
  [[nodiscard]] double statistic(std::span<const double> x, std::span<const double> y) const;
};

/// Lower bound on 1 - rho_k when forming MAD variances, so exactly
/// related bands give a vanishing statistic instead of 0/0.
inline constexpr double kMinMadGap = 1e-6;

IrmadModel irmad_fit(const SceneRaster& pre, const SceneRaster& post, const IrmadOptions& options = {});

/// Same fit on pixel-major matrices (one row per pixel, one column per band).
/// max_pixels and seed are ignored; every row is used.
IrmadModel irmad_fit_pixels(const Eigen::MatrixXd& pre, const Eigen::MatrixXd& post, const IrmadOptions& options = {});

/// Per-pixel statistic over a scene pair; nodata pixels get kExcludedScore.
std::vector<double> irmad_statistic_map(const IrmadModel& model, const SceneRaster& pre, const SceneRaster& post);

/// Mean statistic over the tile's pixels.
double irmad_score(const TilePair& pair, const IrmadModel& model);

/// tau = 95th percentile of nominal scores; flags tiles strictly above tau.
struct ThresholdResult {
  double tau = 0.0;
  std::vector<bool> flagged;
};
ThresholdResult threshold_at_95(std::span<const double> nominal_scores, const ScoreMap& target);

struct ScoreOptions {
  const vae::VaeParams<float>* params = nullptr;
  /// Additional pre-incident scenes; when non-empty every method takes the
  /// minimum over {pre} + history.
  std::vector<const SceneRaster*> history;
  ConfigTag config_tag = ConfigTag::four_band;
  CvaAggregate cva = CvaAggregate::mean;
  IrmadOptions irmad;
  std::size_t tile_size = kDefaultTileSize;
  std::size_t threads = 1;
};

/// Tiles, pairs and scores a preprocessed scene pair with one method.
ScoreMap score_scene(const SceneRaster& pre, const SceneRaster& post, Method method,
                     const ScoreOptions& options = {});

}  // namespace lrc
