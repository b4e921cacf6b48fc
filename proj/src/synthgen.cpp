// SPDX-License-Identifier: Apache-2.0
#include "lrc/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "lrc/error.hpp"

namespace lrc {

using nlohmann::json;

void SynthConfig::validate() const {
  require(width > 0 && height > 0, Errc::domain, "synth scene must be non-empty");
  require(bands == 4 || bands == 8, Errc::domain, "synth bands must be 4 or 8");
  require(burn_visible_gain > 0.0 && burn_visible_gain <= 1.0 && burn_nir_gain > 0.0 && burn_nir_gain <= 1.0,
          Errc::domain, "burn gains must lie in (0, 1]");
  require(burn_texture_sigma >= 0.0 && noise_sigma >= 0.0, Errc::domain, "noise levels must be non-negative");
  require(nuisance_gain_min > 0.0 && nuisance_gain_min <= nuisance_gain_max, Errc::domain,
          "nuisance gain range must be positive and ordered");
  require(misregistration_px <= 2, Errc::domain, "misregistration is limited to 2 px");
  require(target_prevalence > 0.0 && target_prevalence <= 0.10, Errc::domain, "target prevalence must be in (0, 0.10]");
  require(theta > 0.0 && theta <= 1.0, Errc::domain, "coverage threshold must be in (0, 1]");
  require(tile_size >= 8 && width >= tile_size && height >= tile_size, Errc::domain,
          "scene must hold at least one tile of size >= 8");
  require(field_scale > 0.0, Errc::domain, "field scale must be positive");
}

void to_json(json& j, const SynthConfig& c) {
  j = json{{"width", c.width},
           {"height", c.height},
           {"bands", c.bands},
           {"n_burns", c.n_burns},
           {"burn_visible_gain", c.burn_visible_gain},
           {"burn_nir_gain", c.burn_nir_gain},
           {"burn_texture_sigma", c.burn_texture_sigma},
           {"nuisance_gain_range", {c.nuisance_gain_min, c.nuisance_gain_max}},
           {"noise_sigma", c.noise_sigma},
           {"misregistration_px", c.misregistration_px},
           {"target_prevalence", c.target_prevalence},
           {"theta", c.theta},
           {"tile_size", c.tile_size},
           {"field_scale", c.field_scale},
           {"n_history", c.n_history},
           {"seed", c.seed}};
}

void from_json(const json& j, SynthConfig& c) {
  SynthConfig d;
  c.width = j.value("width", d.width);
  c.height = j.value("height", d.height);
  c.bands = j.value("bands", d.bands);
  c.n_burns = j.value("n_burns", d.n_burns);
  c.burn_visible_gain = j.value("burn_visible_gain", d.burn_visible_gain);
  c.burn_nir_gain = j.value("burn_nir_gain", d.burn_nir_gain);
  c.burn_texture_sigma = j.value("burn_texture_sigma", d.burn_texture_sigma);
  if (j.contains("nuisance_gain_range")) {
    const auto& r = j.at("nuisance_gain_range");
    require(r.is_array() && r.size() == 2, Errc::format, "nuisance_gain_range must be [lo, hi]");
    c.nuisance_gain_min = r[0].get<double>();
    c.nuisance_gain_max = r[1].get<double>();
  } else {
    c.nuisance_gain_min = d.nuisance_gain_min;
    c.nuisance_gain_max = d.nuisance_gain_max;
  }
  c.noise_sigma = j.value("noise_sigma", d.noise_sigma);
  c.misregistration_px = j.value("misregistration_px", d.misregistration_px);
  c.target_prevalence = j.value("target_prevalence", d.target_prevalence);
  c.theta = j.value("theta", d.theta);
  c.tile_size = j.value("tile_size", d.tile_size);
  c.field_scale = j.value("field_scale", d.field_scale);
  c.n_history = j.value("n_history", d.n_history);
  c.seed = j.value("seed", d.seed);
}

std::size_t SceneLabels::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
}

bool Ellipse::contains(double x, double y) const {
  const double dx = x - cx, dy = y - cy;
  const double c = std::cos(angle), s = std::sin(angle);
  const double u = (c * dx + s * dy) / semi_a;
  const double v = (-s * dx + c * dy) / semi_b;
  return u * u + v * v <= 1.0;
}

double Ellipse::area() const { return std::numbers::pi * semi_a * semi_b; }

std::vector<std::string> synth_band_names(std::size_t bands) {
  if (bands == 4) return {"blue", "green", "red", "nir"};
  if (bands == 8) return {"coastal_blue", "blue", "green_i", "green", "yellow", "red", "red_edge", "nir"};
  fail(Errc::domain, "synth bands must be 4 or 8");
}

namespace {

std::vector<double> gaussian_taps(double sigma) {
  const auto radius = static_cast<long>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double sum = 0.0;
  for (long i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    sum += v;
  }
  for (double& v : k) v /= sum;
  return k;
}

long reflect(long i, long n) {
  while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
  return i;
}

/// White noise, Gaussian-smoothed, standardised and mapped through the normal CDF to [0, 1].
std::vector<double> smooth_field(std::size_t w, std::size_t h, double sigma, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> f(w * h), tmp(w * h);
  for (double& v : f) v = normal(rng);
  const auto taps = gaussian_taps(sigma);
  const long r = static_cast<long>(taps.size() / 2);
  const long W = static_cast<long>(w), H = static_cast<long>(h);
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      double acc = 0.0;
      for (long t = -r; t <= r; ++t) acc += taps[static_cast<std::size_t>(t + r)] * f[static_cast<std::size_t>(y * W + reflect(x + t, W))];
      tmp[static_cast<std::size_t>(y * W + x)] = acc;
    }
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      double acc = 0.0;
      for (long t = -r; t <= r; ++t) acc += taps[static_cast<std::size_t>(t + r)] * tmp[static_cast<std::size_t>(reflect(y + t, H) * W + x)];
      f[static_cast<std::size_t>(y * W + x)] = acc;
    }
  double mean = 0.0, var = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(f.size());
  for (double v : f) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(f.size()));
  for (double& v : f) v = 0.5 * std::erfc(-(v - mean) / (sd * std::numbers::sqrt2));
  return f;
}

bool is_nir_like(const std::string& name) { return name == "nir" || name == "red_edge"; }

SceneHeader synth_header(const SynthConfig& cfg) {
  SceneHeader h;
  h.width = cfg.width;
  h.height = cfg.height;
  h.bands = cfg.bands;
  h.band_names = synth_band_names(cfg.bands);
  h.nodata_value = kSynthNodata;
  h.resolution_m = 3.0;
  return h;
}

PixelMask rasterize(const std::vector<Ellipse>& regions, std::size_t w, std::size_t h) {
  PixelMask m(w * h, 0);
  for (const Ellipse& e : regions)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        if (e.contains(static_cast<double>(x) + 0.5, static_cast<double>(y) + 0.5)) m[y * w + x] = 1;
  return m;
}

struct Extent {
  double ex, ey;
};

Extent half_extent(const Ellipse& e) {
  const double c = std::cos(e.angle), s = std::sin(e.angle);
  return {std::sqrt(e.semi_a * e.semi_a * c * c + e.semi_b * e.semi_b * s * s),
          std::sqrt(e.semi_a * e.semi_a * s * s + e.semi_b * e.semi_b * c * c)};
}

/// Draws n non-overlapping ellipses whose labelled tile count lands within
/// +-1 of the target, relaxing to +-3 after repeated misses. The count never
/// exceeds 10 percent of the tiles.
std::vector<Ellipse> place_burns(const SynthConfig& cfg, Rng& rng) {
  const std::size_t tiles = cfg.tile_rows() * cfg.tile_cols();
  const auto target = static_cast<long>(std::lround(cfg.target_prevalence * static_cast<double>(tiles)));
  require(static_cast<long>(cfg.n_burns) <= target + 3, Errc::placement,
          "cannot place that many burns within the target prevalence");
  // Keep burns off the border tiles when the post scene may be shifted, since
  // those tiles pick up nodata.
  const double margin = cfg.misregistration_px > 0 ? static_cast<double>(cfg.tile_size) : 1.0;
  const double lo_x = margin, hi_x = static_cast<double>(cfg.width) - margin;
  const double lo_y = margin, hi_y = static_cast<double>(cfg.height) - margin;
  const double tile_area = static_cast<double>(cfg.tile_size * cfg.tile_size);
  const auto cap = static_cast<long>(std::floor(0.10 * static_cast<double>(tiles) + 1e-9));

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double scale = 1.0;
  for (int attempt = 0; attempt < 200; ++attempt) {
    std::vector<Ellipse> burns;
    bool placed_all = true;
    for (std::size_t i = 0; i < cfg.n_burns && placed_all; ++i) {
      const double area = scale * static_cast<double>(target) * tile_area / static_cast<double>(cfg.n_burns) *
                          (0.7 + 0.6 * unit(rng));
      const double ratio = 1.0 + unit(rng);
      Ellipse e;
      e.semi_a = std::sqrt(area * ratio / std::numbers::pi);
      e.semi_b = std::sqrt(area / (ratio * std::numbers::pi));
      e.angle = std::numbers::pi * unit(rng);
      const Extent ext = half_extent(e);
      if (hi_x - lo_x <= 2 * ext.ex || hi_y - lo_y <= 2 * ext.ey) {
        placed_all = false;
        break;
      }
      bool ok = false;
      for (int tries = 0; tries < 50 && !ok; ++tries) {
        e.cx = lo_x + ext.ex + unit(rng) * (hi_x - lo_x - 2 * ext.ex);
        e.cy = lo_y + ext.ey + unit(rng) * (hi_y - lo_y - 2 * ext.ey);
        ok = std::all_of(burns.begin(), burns.end(), [&](const Ellipse& o) {
          const Extent oe = half_extent(o);
          return std::abs(o.cx - e.cx) > oe.ex + ext.ex || std::abs(o.cy - e.cy) > oe.ey + ext.ey;
        });
      }
      if (!ok) placed_all = false;
      else burns.push_back(e);
    }
    if (!placed_all) {
      scale *= 0.8;
      continue;
    }
    const SceneLabels lab = labels_from_mask(rasterize(burns, cfg.width, cfg.height), cfg.width, cfg.height,
                                             cfg.tile_size, cfg.theta);
    const auto got = static_cast<long>(lab.positives());
    const long tolerance = attempt < 150 ? 1 : 3;
    if (std::abs(got - target) <= tolerance && (got <= cap || got <= target)) return burns;
    scale *= got > 0 ? std::clamp(static_cast<double>(target) / static_cast<double>(got), 0.5, 2.0) : 1.5;
  }
  fail(Errc::placement, "could not place burns at the target prevalence");
}

}  // namespace

SceneRaster gen_background(const SynthConfig& cfg, Rng& rng) {
  SceneRaster scene(synth_header(cfg));
  const auto common = smooth_field(cfg.width, cfg.height, cfg.field_scale, rng);
  for (std::size_t b = 0; b < cfg.bands; ++b) {
    const auto own = smooth_field(cfg.width, cfg.height, cfg.field_scale, rng);
    auto band = scene.band(b);
    for (std::size_t i = 0; i < band.size(); ++i)
      band[i] = static_cast<float>(0.05 + 0.55 * (0.75 * common[i] + 0.25 * own[i]));
  }
  return scene;
}

PixelMask inject_burn(SceneRaster& scene, const Ellipse& region, const SynthConfig& cfg, Rng& rng) {
  const auto& h = scene.header;
  const Extent ext = half_extent(region);
  require(region.semi_a > 0.0 && region.semi_b > 0.0 && region.cx - ext.ex >= 0.0 && region.cy - ext.ey >= 0.0 &&
              region.cx + ext.ex <= static_cast<double>(h.width) && region.cy + ext.ey <= static_cast<double>(h.height),
          Errc::domain, "burn region outside the scene");
  PixelMask mask = rasterize({region}, h.width, h.height);
  std::vector<double> gains(h.bands);
  for (std::size_t b = 0; b < h.bands; ++b)
    gains[b] = is_nir_like(h.band_names[b]) ? cfg.burn_nir_gain : cfg.burn_visible_gain;
  std::normal_distribution<double> texture(0.0, cfg.burn_texture_sigma);
  for (std::size_t b = 0; b < h.bands; ++b) {
    auto band = scene.band(b);
    const bool darken = gains[b] < 1.0;
    for (std::size_t i = 0; i < band.size(); ++i) {
      if (!mask[i] || !darken || scene.is_nodata(band[i])) continue;
      double v = static_cast<double>(band[i]) * gains[b];
      if (cfg.burn_texture_sigma > 0.0) v += texture(rng);
      band[i] = static_cast<float>(v);
    }
  }
  return mask;
}

SceneRaster inject_nuisance(const SceneRaster& scene, const SynthConfig& cfg, Rng& rng, NuisanceShift* shift_out) {
  const auto& h = scene.header;
  std::uniform_real_distribution<double> gain_dist(cfg.nuisance_gain_min, cfg.nuisance_gain_max);
  std::vector<double> gains(h.bands);
  for (double& g : gains) g = cfg.nuisance_gain_min == cfg.nuisance_gain_max ? cfg.nuisance_gain_min : gain_dist(rng);
  const auto m = static_cast<long>(cfg.misregistration_px);
  std::uniform_int_distribution<long> shift_dist(-m, m);
  NuisanceShift s;
  if (m > 0) {
    s.dx = shift_dist(rng);
    s.dy = shift_dist(rng);
  }
  if (shift_out) *shift_out = s;

  SceneRaster out = scene;
  if (!out.header.nodata_value) out.header.nodata_value = kSynthNodata;
  const float nodata = *out.header.nodata_value;
  const long W = static_cast<long>(h.width), H = static_cast<long>(h.height);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  for (std::size_t b = 0; b < h.bands; ++b) {
    for (long y = 0; y < H; ++y)
      for (long x = 0; x < W; ++x) {
        const long sy = y - s.dy, sx = x - s.dx;
        float& dst = out.at(b, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
        if (sy < 0 || sy >= H || sx < 0 || sx >= W) {
          dst = nodata;
          continue;
        }
        const float src = scene.at(b, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
        if (scene.is_nodata(src)) {
          dst = nodata;
          continue;
        }
        dst = gains[b] == 1.0 ? src : static_cast<float>(static_cast<double>(src) * gains[b]);
      }
  }
  if (cfg.noise_sigma > 0.0)
    for (float& v : out.values)
      if (v != nodata) v = static_cast<float>(static_cast<double>(v) + noise(rng));
  return out;
}

PixelMask shift_mask(const PixelMask& mask, std::size_t width, std::size_t height, NuisanceShift s) {
  PixelMask out(mask.size(), 0);
  const long W = static_cast<long>(width), H = static_cast<long>(height);
  for (long y = 0; y < H; ++y)
    for (long x = 0; x < W; ++x) {
      const long sy = y - s.dy, sx = x - s.dx;
      if (sy >= 0 && sy < H && sx >= 0 && sx < W)
        out[static_cast<std::size_t>(y * W + x)] = mask[static_cast<std::size_t>(sy * W + sx)];
    }
  return out;
}

SceneLabels labels_from_mask(const PixelMask& mask, std::size_t width, std::size_t height, std::size_t tile_size,
                             double theta) {
  SceneLabels lab;
  lab.rows = height / tile_size;
  lab.cols = width / tile_size;
  lab.theta = theta;
  lab.labels.assign(lab.rows * lab.cols, false);
  lab.burned_fraction.assign(lab.rows * lab.cols, 0.0);
  for (std::size_t r = 0; r < lab.rows; ++r)
    for (std::size_t c = 0; c < lab.cols; ++c) {
      std::size_t burned = 0;
      for (std::size_t y = r * tile_size; y < (r + 1) * tile_size; ++y)
        for (std::size_t x = c * tile_size; x < (c + 1) * tile_size; ++x) burned += mask[y * width + x];
      const double frac = static_cast<double>(burned) / static_cast<double>(tile_size * tile_size);
      lab.burned_fraction[r * lab.cols + c] = frac;
      lab.labels[r * lab.cols + c] = frac >= theta;
    }
  return lab;
}

ScenePair gen_scene_pair(const SynthConfig& cfg) {
  cfg.validate();
  ScenePair out;
  Rng bg_rng = make_rng(cfg.seed, "synth.background");
  const SceneRaster base = gen_background(cfg, bg_rng);
  out.pre = base;

  SceneRaster burned = base;
  PixelMask mask(cfg.width * cfg.height, 0);
  if (cfg.n_burns > 0) {
    Rng place_rng = make_rng(cfg.seed, "synth.place");
    Rng burn_rng = make_rng(cfg.seed, "synth.burn");
    for (const Ellipse& e : place_burns(cfg, place_rng)) {
      const PixelMask m = inject_burn(burned, e, cfg, burn_rng);
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] |= m[i];
    }
  }
  Rng nuisance_rng = make_rng(cfg.seed, "synth.nuisance");
  NuisanceShift shift;
  out.post = inject_nuisance(burned, cfg, nuisance_rng, &shift);
  out.labels = labels_from_mask(shift_mask(mask, cfg.width, cfg.height, shift), cfg.width, cfg.height, cfg.tile_size,
                                cfg.theta);
  for (std::size_t i = 0; i < cfg.n_history; ++i) {
    Rng hist_rng = make_rng(cfg.seed, "synth.history", i);
    out.history.push_back(inject_nuisance(base, cfg, hist_rng));
  }
  return out;
}

SceneRaster gen_nominal_scene(const SynthConfig& cfg, std::size_t index) {
  cfg.validate();
  Rng bg_rng = make_rng(cfg.seed, "synth.nominal", index);
  const SceneRaster base = gen_background(cfg, bg_rng);
  Rng nuisance_rng = make_rng(cfg.seed, "synth.nominal.nuisance", index);
  return inject_nuisance(base, cfg, nuisance_rng);
}

void save_labels(const SceneLabels& labels, const std::filesystem::path& path) {
  json j = {{"rows", labels.rows},
            {"cols", labels.cols},
            {"theta", labels.theta},
            {"labels", labels.labels},
            {"burned_fraction", labels.burned_fraction}};
  std::ofstream os(path);
  require(static_cast<bool>(os), Errc::io, "cannot write " + path.string());
  os << j.dump(2) << '\n';
}

SceneLabels load_labels(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), Errc::io, "cannot read " + path.string());
  SceneLabels lab;
  try {
    const json j = json::parse(is);
    lab.rows = j.at("rows");
    lab.cols = j.at("cols");
    lab.theta = j.at("theta");
    lab.labels = j.at("labels").get<std::vector<bool>>();
    lab.burned_fraction = j.at("burned_fraction").get<std::vector<double>>();
  } catch (const json::exception& e) {
    fail(Errc::format, "malformed labels " + path.string() + ": " + e.what());
  }
  require(lab.labels.size() == lab.rows * lab.cols && lab.burned_fraction.size() == lab.labels.size(), Errc::format,
          "labels length does not match rows x cols");
  return lab;
}

}  // namespace lrc
