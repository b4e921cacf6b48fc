// SPDX-License-Identifier: Apache-2.0
#include "lrc/raster_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "lrc/error.hpp"

namespace lrc {

namespace fs = std::filesystem;
using nlohmann::json;

void SceneHeader::validate() const {
  require(width > 0 && height > 0, Errc::domain, "scene dimensions must be positive");
  require(bands > 0, Errc::domain, "scene must have at least one band");
  require(band_names.size() == bands, Errc::domain,
          "band_names has " + std::to_string(band_names.size()) + " entries for " + std::to_string(bands) +
              " bands");
}

SceneRaster::SceneRaster(SceneHeader h, std::vector<float> v) : header(std::move(h)), values(std::move(v)) {
  validate();
}

SceneRaster::SceneRaster(SceneHeader h) : header(std::move(h)) {
  header.validate();
  values.assign(header.pixels() * header.bands, 0.0f);
}

bool SceneRaster::pixel_is_nodata(std::size_t row, std::size_t col) const {
  if (!header.nodata_value) return false;
  for (std::size_t b = 0; b < header.bands; ++b)
    if (at(b, row, col) == *header.nodata_value) return true;
  return false;
}

void SceneRaster::validate() const {
  header.validate();
  require(values.size() == header.pixels() * header.bands, Errc::format,
          "payload holds " + std::to_string(values.size()) + " values, header implies " +
              std::to_string(header.pixels() * header.bands));
  for (float v : values)
    require(std::isfinite(v) || is_nodata(v), Errc::domain, "scene contains non-finite reflectance");
}

fs::path payload_path(const fs::path& path) {
  fs::path p = path;
  return p.replace_extension(".bin");
}

fs::path sidecar_path(const fs::path& path) {
  fs::path p = path;
  return p.replace_extension(".json");
}

SceneRaster load_scene(const fs::path& path) {
  std::ifstream hs(sidecar_path(path));
  require(static_cast<bool>(hs), Errc::format, "missing header sidecar " + sidecar_path(path).string());
  SceneHeader h;
  try {
    json j = json::parse(hs);
    h.width = j.at("width").get<std::size_t>();
    h.height = j.at("height").get<std::size_t>();
    h.bands = j.at("bands").get<std::size_t>();
    h.band_names = j.at("band_names").get<std::vector<std::string>>();
    if (j.contains("nodata_value") && !j.at("nodata_value").is_null())
      h.nodata_value = j.at("nodata_value").get<float>();
    if (j.contains("resolution_m")) h.resolution_m = j.at("resolution_m").get<double>();
  } catch (const json::exception& e) {
    fail(Errc::format, "corrupt header " + sidecar_path(path).string() + ": " + e.what());
  }
  try {
    h.validate();
  } catch (const Error& e) {
    fail(Errc::format, e.what());
  }

  std::ifstream ps(payload_path(path), std::ios::binary);
  require(static_cast<bool>(ps), Errc::format, "missing payload " + payload_path(path).string());
  ps.seekg(0, std::ios::end);
  const auto bytes = static_cast<std::size_t>(ps.tellg());
  ps.seekg(0, std::ios::beg);
  const std::size_t expected = h.pixels() * h.bands;
  require(bytes == expected * sizeof(float), Errc::format,
          "payload is " + std::to_string(bytes) + " bytes, header implies " +
              std::to_string(expected * sizeof(float)));
  std::vector<float> values(expected);
  require(detail::read_f32_le(ps, values), Errc::format, "short read on payload");
  return SceneRaster(std::move(h), std::move(values));
}

void save_scene(const SceneRaster& scene, const fs::path& path) {
  scene.validate();
  json j;
  j["width"] = scene.header.width;
  j["height"] = scene.header.height;
  j["bands"] = scene.header.bands;
  j["band_names"] = scene.header.band_names;
  j["nodata_value"] = scene.header.nodata_value ? json(*scene.header.nodata_value) : json(nullptr);
  j["resolution_m"] = scene.header.resolution_m;

  std::ofstream ps(payload_path(path), std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(ps), Errc::io, "cannot write " + payload_path(path).string());
  detail::write_f32_le(ps, scene.values);
  require(static_cast<bool>(ps), Errc::io, "write failed for " + payload_path(path).string());

  std::ofstream hs(sidecar_path(path), std::ios::trunc);
  require(static_cast<bool>(hs), Errc::io, "cannot write " + sidecar_path(path).string());
  hs << j.dump(2) << '\n';
}

TileGrid tile_scene(const SceneRaster& scene, std::size_t size) {
  require(size >= 8, Errc::domain, "tile size must be at least 8");
  const auto& h = scene.header;
  TileGrid grid;
  grid.size = size;
  grid.rows = h.height / size;
  grid.cols = h.width / size;
  grid.source_header = h;
  require(grid.rows > 0 && grid.cols > 0, Errc::empty_grid,
          std::to_string(h.width) + "x" + std::to_string(h.height) + " scene is smaller than one " +
              std::to_string(size) + "-pixel tile");
  grid.tiles.reserve(grid.rows * grid.cols);
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      Tile t;
      t.row = r;
      t.col = c;
      t.size = size;
      t.bands = h.bands;
      t.values.resize(size * size * h.bands);
      for (std::size_t b = 0; b < h.bands; ++b) {
        for (std::size_t y = 0; y < size; ++y) {
          const float* src = &scene.values[(b * h.height + r * size + y) * h.width + c * size];
          std::copy_n(src, size, &t.at(b, y, 0));
        }
      }
      if (h.nodata_value) {
        t.excluded = std::any_of(t.values.begin(), t.values.end(),
                                 [nd = *h.nodata_value](float v) { return v == nd; });
      }
      grid.tiles.push_back(std::move(t));
    }
  }
  return grid;
}

namespace {

bool same_shape(const TileGrid& a, const TileGrid& b) {
  return a.rows == b.rows && a.cols == b.cols && a.size == b.size &&
         a.source_header.bands == b.source_header.bands;
}

}  // namespace

std::vector<TilePair> pair_tiles(const TileGrid& pre, const TileGrid& post, std::span<const TileGrid> history) {
  require(same_shape(pre, post), Errc::pairing, "pre and post grids differ in rows, cols, size or bands");
  for (const auto& h : history) require(same_shape(pre, h), Errc::pairing, "history grid shape mismatch");
  std::vector<TilePair> pairs;
  pairs.reserve(pre.tiles.size());
  for (std::size_t i = 0; i < pre.tiles.size(); ++i) {
    TilePair p;
    p.pre = pre.tiles[i];
    p.post = post.tiles[i];
    p.excluded = p.pre.excluded || p.post.excluded;
    p.pre_history.reserve(history.size());
    for (const auto& h : history) {
      p.pre_history.push_back(h.tiles[i]);
      p.excluded = p.excluded || h.tiles[i].excluded;
    }
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::vector<unsigned char> pgm_levels(const ScoreMap& map) {
  require(!map.scores.empty(), Errc::domain, "cannot export an empty score map");
  double lo = 0.0;
  double hi = 0.0;
  bool any = false;
  for (double s : map.scores) {
    if (ScoreMap::excluded(s)) continue;
    lo = any ? std::min(lo, s) : s;
    hi = any ? std::max(hi, s) : s;
    any = true;
  }
  std::vector<unsigned char> levels(map.scores.size(), 0);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const double s = map.scores[i];
    if (ScoreMap::excluded(s)) continue;
    if (hi == lo) {
      levels[i] = 128;
    } else {
      levels[i] = static_cast<unsigned char>(std::lround(255.0 * (s - lo) / (hi - lo)));
    }
  }
  return levels;
}

void export_pgm(const ScoreMap& map, const fs::path& path) {
  const auto levels = pgm_levels(map);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), Errc::io, "cannot write " + path.string());
  os << "P5\n" << map.cols << ' ' << map.rows << "\n255\n";
  os.write(reinterpret_cast<const char*>(levels.data()), static_cast<std::streamsize>(levels.size()));
  require(static_cast<bool>(os), Errc::io, "write failed for " + path.string());
}

}  // namespace lrc
