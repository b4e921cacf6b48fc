// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstring>
#include <fstream>

#include "errc.hpp"
#include "helpers.hpp"
#include "lrc/raster_io.hpp"

using namespace lrc;
using lrc::test::make_header;
using lrc::test::random_scene;

namespace {

std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST_CASE("scene round trip is bitwise") {
  test::TempDir dir("scene");
  SceneRaster s = random_scene(64, 64, 4, 11);
  s.header.nodata_value = -9999.0f;
  s.values[5] = -9999.0f;
  save_scene(s, dir.path / "a");
  const SceneRaster r = load_scene(dir.path / "a.json");
  CHECK(r.header == s.header);
  REQUIRE(r.values.size() == s.values.size());
  CHECK(std::memcmp(r.values.data(), s.values.data(), s.values.size() * sizeof(float)) == 0);
  CHECK(r.is_nodata(r.values[5]));
}

TEST_CASE("payload is little-endian float32, band-major") {
  test::TempDir dir("payload");
  SceneRaster s(make_header(2, 2, 1), {0.0f, 0.5f, 1.0f, 0.25f});
  save_scene(s, dir.path / "p");
  const auto bytes = read_bytes(dir.path / "p.bin");
  REQUIRE(bytes.size() == 16);
  // 0.5f = 0x3F000000
  CHECK(static_cast<unsigned char>(bytes[4]) == 0x00);
  CHECK(static_cast<unsigned char>(bytes[7]) == 0x3F);
}

TEST_CASE("save rejects invalid headers before writing") {
  test::TempDir dir("invalid");
  SceneRaster s(make_header(2, 2, 1), {0, 0, 0, 0});
  s.header.band_names.clear();
  CHECK_THROWS_AS(save_scene(s, dir.path / "x"), Error);
  CHECK_FALSE(std::filesystem::exists(dir.path / "x.bin"));
  CHECK_FALSE(std::filesystem::exists(dir.path / "x.json"));
}

TEST_CASE("save overwrites existing files") {
  test::TempDir dir("overwrite");
  save_scene(random_scene(8, 8, 1, 1), dir.path / "o");
  const SceneRaster second = random_scene(8, 8, 1, 2);
  save_scene(second, dir.path / "o");
  CHECK(load_scene(dir.path / "o").values == second.values);
}

TEST_CASE("load detects corrupt inputs") {
  test::TempDir dir("corrupt");
  save_scene(random_scene(4, 4, 4, 3), dir.path / "c");
  SUBCASE("payload shorter than header declares") {
    std::filesystem::resize_file(dir.path / "c.bin", 4 * 4 * 3 * 4);
    CHECK_ERRC(load_scene(dir.path / "c"), Errc::format);
  }
  SUBCASE("payload longer than header declares") {
    std::ofstream(dir.path / "c.bin", std::ios::app | std::ios::binary) << "xxxx";
    CHECK_ERRC(load_scene(dir.path / "c"), Errc::format);
  }
  SUBCASE("missing sidecar") {
    std::filesystem::remove(dir.path / "c.json");
    CHECK_ERRC(load_scene(dir.path / "c"), Errc::format);
  }
  SUBCASE("garbled sidecar") {
    std::ofstream(dir.path / "c.json") << "{ not json";
    CHECK_ERRC(load_scene(dir.path / "c"), Errc::format);
  }
}

TEST_CASE("tiling uses floor division and drops edges") {
  CHECK(tile_scene(random_scene(96, 96, 4, 1)).tiles.size() == 9);
  const TileGrid g = tile_scene(random_scene(100, 100, 4, 1));
  CHECK(g.rows == 3);
  CHECK(g.cols == 3);
  CHECK_ERRC(tile_scene(random_scene(20, 20, 1, 1), 32), Errc::empty_grid);
  CHECK_ERRC(tile_scene(random_scene(20, 20, 1, 1), 4), Errc::domain);
}

TEST_CASE("retained tiles reassemble the covered sub-raster") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const std::size_t w = 40 + seed * 13, h = 33 + seed * 7;
    const SceneRaster s = random_scene(w, h, 3, seed);
    const TileGrid g = tile_scene(s, 16);
    REQUIRE(g.tiles.size() == g.rows * g.cols);
    std::vector<int> hits(w * h, 0);
    for (const Tile& t : g.tiles)
      for (std::size_t b = 0; b < 3; ++b)
        for (std::size_t y = 0; y < 16; ++y)
          for (std::size_t x = 0; x < 16; ++x) {
            const std::size_t r = t.row * 16 + y, c = t.col * 16 + x;
            CHECK(t.at(b, y, x) == s.at(b, r, c));
            if (b == 0) ++hits[r * w + c];
          }
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const bool covered = r < g.rows * 16 && c < g.cols * 16;
        CHECK(hits[r * w + c] == (covered ? 1 : 0));
      }
  }
}

TEST_CASE("tiles containing nodata are excluded") {
  SceneRaster s = random_scene(64, 64, 2, 5);
  s.header.nodata_value = -1.0f;
  s.at(1, 40, 3) = -1.0f;
  const TileGrid g = tile_scene(s);
  CHECK_FALSE(g.at(0, 0).excluded);
  CHECK(g.at(1, 0).excluded);
  CHECK_FALSE(g.at(1, 1).excluded);
}

TEST_CASE("pairing") {
  const TileGrid a = tile_scene(random_scene(96, 96, 4, 1));
  const TileGrid b = tile_scene(random_scene(96, 96, 4, 2));
  CHECK(pair_tiles(a, b).size() == 9);
  CHECK_ERRC(pair_tiles(a, tile_scene(random_scene(128, 96, 4, 3))), Errc::pairing);
  const std::vector<TileGrid> hist{a, b, a};
  const auto pairs = pair_tiles(a, b, hist);
  REQUIRE(pairs.size() == 9);
  for (const auto& p : pairs) CHECK(p.pre_history.size() == 3);

  SceneRaster holes = random_scene(96, 96, 4, 4);
  holes.header.nodata_value = -1.0f;
  holes.at(0, 0, 0) = -1.0f;
  const std::vector<TileGrid> hist2{tile_scene(holes)};
  const auto flagged = pair_tiles(a, b, hist2);
  CHECK(flagged[0].excluded);
  CHECK_FALSE(flagged[1].excluded);
}

TEST_CASE("pgm grey levels") {
  ScoreMap m;
  m.rows = 1;
  m.cols = 3;
  m.scores = {0.0, 0.5, 1.0};
  CHECK(pgm_levels(m) == std::vector<unsigned char>{0, 128, 255});
  m.scores = {0.7, 0.7, 0.7};
  CHECK(pgm_levels(m) == std::vector<unsigned char>{128, 128, 128});
  m.cols = 2;
  m.scores = {0.0, 1.0};
  CHECK(pgm_levels(m) == std::vector<unsigned char>{0, 255});

  test::TempDir dir("pgm");
  m.scores = {0.0, 1.0};
  export_pgm(m, dir.path / "m.pgm");
  const auto bytes = read_bytes(dir.path / "m.pgm");
  const std::string header = "P5\n2 1\n255\n";
  REQUIRE(bytes.size() == header.size() + 2);
  CHECK(std::string(bytes.begin(), bytes.begin() + static_cast<long>(header.size())) == header);
  CHECK(static_cast<unsigned char>(bytes.back()) == 255);
}
