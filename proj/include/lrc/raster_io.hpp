// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lrc/score_map.hpp"

namespace lrc {

struct SceneHeader {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t bands = 0;
  std::vector<std::string> band_names;
  std::optional<float> nodata_value;
  double resolution_m = 3.0;

  void validate() const;
  [[nodiscard]] std::size_t pixels() const noexcept { return width * height; }
  bool operator==(const SceneHeader&) const = default;
};

/// Multiband reflectance grid stored band-major, then row-major: [band][row][col].
struct SceneRaster {
  SceneHeader header;
  std::vector<float> values;

  SceneRaster() = default;
  SceneRaster(SceneHeader h, std::vector<float> v);
  /// Zero-filled scene with the given header.
  explicit SceneRaster(SceneHeader h);

  [[nodiscard]] float at(std::size_t band, std::size_t row, std::size_t col) const {
    return values[(band * header.height + row) * header.width + col];
  }
  float& at(std::size_t band, std::size_t row, std::size_t col) {
    return values[(band * header.height + row) * header.width + col];
  }
  [[nodiscard]] std::span<const float> band(std::size_t b) const {
    return {values.data() + b * header.pixels(), header.pixels()};
  }
  std::span<float> band(std::size_t b) { return {values.data() + b * header.pixels(), header.pixels()}; }
  [[nodiscard]] bool is_nodata(float v) const noexcept {
    return header.nodata_value && v == *header.nodata_value;
  }
  /// True when any band carries the nodata sentinel at this pixel.
  [[nodiscard]] bool pixel_is_nodata(std::size_t row, std::size_t col) const;
  void validate() const;
};

inline constexpr std::size_t kDefaultTileSize = 32;

/// A size x size x C patch, band-major like SceneRaster.
struct Tile {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t size = kDefaultTileSize;
  std::size_t bands = 0;
  std::vector<float> values;
  /// Set when any pixel held nodata; such tiles are never scored.
  bool excluded = false;

  [[nodiscard]] float at(std::size_t b, std::size_t y, std::size_t x) const {
    return values[(b * size + y) * size + x];
  }
  float& at(std::size_t b, std::size_t y, std::size_t x) { return values[(b * size + y) * size + x]; }
  [[nodiscard]] bool same_geometry(const Tile& o) const noexcept {
    return row == o.row && col == o.col && size == o.size && bands == o.bands;
  }
};

struct TileGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t size = kDefaultTileSize;
  std::vector<Tile> tiles;
  SceneHeader source_header;

  [[nodiscard]] const Tile& at(std::size_t r, std::size_t c) const { return tiles.at(r * cols + c); }
};

struct TilePair {
  Tile pre;
  Tile post;
  std::vector<Tile> pre_history;
  bool excluded = false;
};

SceneRaster load_scene(const std::filesystem::path& path);
void save_scene(const SceneRaster& scene, const std::filesystem::path& path);

/// `<stem>.bin` and `<stem>.json` for a path given with or without extension.
std::filesystem::path payload_path(const std::filesystem::path& path);
std::filesystem::path sidecar_path(const std::filesystem::path& path);

TileGrid tile_scene(const SceneRaster& scene, std::size_t size = kDefaultTileSize);

std::vector<TilePair> pair_tiles(const TileGrid& pre, const TileGrid& post,
                                 std::span<const TileGrid> history = {});

/// Binary P5 greyscale, one pixel per tile; min score -> 0, max -> 255.
void export_pgm(const ScoreMap& map, const std::filesystem::path& path);
/// The grey levels export_pgm writes, exposed for inspection.
std::vector<unsigned char> pgm_levels(const ScoreMap& map);

}  // namespace lrc
