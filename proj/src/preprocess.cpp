// SPDX-License-Identifier: Apache-2.0
#include "lrc/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "lrc/error.hpp"

namespace lrc {

using nlohmann::json;

SpectralAlignParams SpectralAlignParams::identity(std::size_t bands) {
  return {std::vector<double>(bands, 1.0), std::vector<double>(bands, 0.0)};
}

void SpectralAlignParams::validate() const {
  require(gain.size() == offset.size(), Errc::domain, "alignment gain/offset length mismatch");
  for (std::size_t b = 0; b < gain.size(); ++b) {
    require(std::isfinite(gain[b]) && gain[b] != 0.0, Errc::domain, "alignment gain must be finite and non-zero");
    require(std::isfinite(offset[b]), Errc::domain, "alignment offset must be finite");
  }
}

void NormalizationParams::validate() const {
  require(epsilon > 0.0, Errc::domain, "epsilon must be positive");
  require(p1.size() == p99.size() && !p1.empty(), Errc::domain, "normalization anchors malformed");
  for (std::size_t b = 0; b < p1.size(); ++b)
    require(p99[b] > p1[b], Errc::degenerate, "band " + std::to_string(b) + " has p99 <= p1");
}

double percentile(std::span<const double> values, double p) {
  require(!values.empty(), Errc::domain, "percentile of an empty set");
  require(p >= 0.0 && p <= 100.0, Errc::domain, "percentile outside [0, 100]");
  std::vector<double> v(values.begin(), values.end());
  const double rank = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const double frac = rank - static_cast<double>(lo);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
  const double a = v[lo];
  if (frac == 0.0 || lo + 1 >= v.size()) return a;
  const double b = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo) + 1, v.end());
  return a + frac * (b - a);
}

LinearFit fit_ma_regression(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), Errc::domain, "regression samples differ in length");
  require(x.size() >= 3, Errc::domain, "major-axis regression needs at least 3 samples");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  sxx /= n - 1;
  syy /= n - 1;
  sxy /= n - 1;
  require(sxx > 0.0 && syy > 0.0, Errc::degenerate, "zero variance in regression samples");
  require(sxy != 0.0, Errc::degenerate, "zero covariance, major axis undefined");
  const double d = syy - sxx;
  const double gain = (d + std::sqrt(d * d + 4.0 * sxy * sxy)) / (2.0 * sxy);
  return {gain, my - gain * mx};
}

SceneRaster apply_spectral_alignment(const SceneRaster& scene, const SpectralAlignParams& params) {
  params.validate();
  require(params.gain.size() == scene.header.bands, Errc::domain, "alignment band count mismatch");
  SceneRaster out = scene;
  for (std::size_t b = 0; b < scene.header.bands; ++b) {
    for (float& v : out.band(b)) {
      if (out.is_nodata(v)) continue;
      v = static_cast<float>(params.gain[b] * v + params.offset[b]);
    }
  }
  return out;
}

namespace {

double log_domain(double x, double epsilon) { return std::log(std::max(x, 0.0) + epsilon); }

}  // namespace

NormalizationParams fit_normalization(std::span<const SceneRaster> training_scenes, double epsilon) {
  require(!training_scenes.empty(), Errc::domain, "no training scenes");
  require(epsilon > 0.0, Errc::domain, "epsilon must be positive");
  const std::size_t bands = training_scenes.front().header.bands;
  for (const auto& s : training_scenes)
    require(s.header.bands == bands, Errc::domain, "training scenes differ in band count");

  NormalizationParams params;
  params.epsilon = epsilon;
  std::vector<double> pooled;
  for (std::size_t b = 0; b < bands; ++b) {
    pooled.clear();
    for (const auto& s : training_scenes)
      for (float v : s.band(b))
        if (!s.is_nodata(v)) pooled.push_back(log_domain(v, epsilon));
    require(!pooled.empty(), Errc::domain, "band " + std::to_string(b) + " has no valid pixels");
    params.p1.push_back(percentile(pooled, 1.0));
    params.p99.push_back(percentile(pooled, 99.0));
    require(params.p99.back() > params.p1.back(), Errc::degenerate,
            "band " + std::to_string(b) + " is constant across the training set");
  }
  return params;
}

double lognorm_value(double x, double epsilon, double p1, double p99) {
  const double scaled = 2.0 * (log_domain(x, epsilon) - p1) / (p99 - p1) - 1.0;
  return std::clamp(scaled, -1.0, 1.0);
}

Tile apply_lognorm(const Tile& tile, const NormalizationParams& params) {
  require(tile.bands == params.bands(), Errc::domain, "tile band count does not match normalization");
  Tile out = tile;
  const std::size_t plane = tile.size * tile.size;
  for (std::size_t b = 0; b < tile.bands; ++b)
    for (std::size_t i = 0; i < plane; ++i) {
      float& v = out.values[b * plane + i];
      v = static_cast<float>(lognorm_value(v, params.epsilon, params.p1[b], params.p99[b]));
    }
  return out;
}

SceneRaster apply_lognorm(const SceneRaster& scene, const NormalizationParams& params) {
  require(scene.header.bands == params.bands(), Errc::domain, "scene band count does not match normalization");
  SceneRaster out = scene;
  for (std::size_t b = 0; b < scene.header.bands; ++b)
    for (float& v : out.band(b)) {
      if (out.is_nodata(v)) continue;
      v = static_cast<float>(lognorm_value(v, params.epsilon, params.p1[b], params.p99[b]));
    }
  return out;
}

SceneRaster preprocess_scene(const SceneRaster& scene, const PreprocessParams& params) {
  return apply_lognorm(apply_spectral_alignment(scene, params.align), params.norm);
}

void save_preprocess_params(const PreprocessParams& params, const std::filesystem::path& path) {
  params.norm.validate();
  params.align.validate();
  json j;
  j["epsilon"] = params.norm.epsilon;
  j["p1"] = params.norm.p1;
  j["p99"] = params.norm.p99;
  j["alpha"] = params.align.gain;
  j["beta"] = params.align.offset;
  std::ofstream os(path, std::ios::trunc);
  require(static_cast<bool>(os), Errc::io, "cannot write " + path.string());
  // max_digits10 via nlohmann's shortest round-trip formatting keeps the archive exact.
  os << j.dump(2) << '\n';
}

PreprocessParams load_preprocess_params(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), Errc::io, "cannot read " + path.string());
  PreprocessParams p;
  try {
    json j = json::parse(is);
    p.norm.epsilon = j.at("epsilon").get<double>();
    p.norm.p1 = j.at("p1").get<std::vector<double>>();
    p.norm.p99 = j.at("p99").get<std::vector<double>>();
    p.align.gain = j.at("alpha").get<std::vector<double>>();
    p.align.offset = j.at("beta").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(Errc::format, "corrupt parameter archive " + path.string() + ": " + e.what());
  }
  p.norm.validate();
  p.align.validate();
  require(p.align.gain.size() == p.norm.bands(), Errc::format, "archive band counts disagree");
  return p;
}

}  // namespace lrc
