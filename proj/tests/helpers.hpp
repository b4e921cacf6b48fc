// SPDX-License-Identifier: Apache-2.0
// Seeded generators shared by the unit and acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "lrc/nn/tensor.hpp"
#include "lrc/raster_io.hpp"
#include "lrc/rng.hpp"

namespace lrc::nn {

/// Lets tests compare tensor storage against plain vector literals.
template <typename T>
bool operator==(const AlignedVector<T>& a, const std::vector<T>& b) {
  return std::equal(a.begin(), a.end(), b.begin(), b.end());
}

}  // namespace lrc::nn

namespace lrc::test {

inline SceneHeader make_header(std::size_t w, std::size_t h, std::size_t bands) {
  SceneHeader hd;
  hd.width = w;
  hd.height = h;
  hd.bands = bands;
  for (std::size_t b = 0; b < bands; ++b) hd.band_names.push_back("b" + std::to_string(b));
  return hd;
}

inline SceneRaster random_scene(std::size_t w, std::size_t h, std::size_t bands, std::uint64_t seed, float lo = 0.0f,
                                float hi = 1.0f) {
  SceneRaster s(make_header(w, h, bands));
  Rng rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  for (float& v : s.values) v = u(rng);
  return s;
}

inline Tile random_tile(std::size_t bands, std::uint64_t seed, std::size_t size = 32, float lo = -1.0f,
                        float hi = 1.0f) {
  Tile t;
  t.size = size;
  t.bands = bands;
  t.values.resize(bands * size * size);
  Rng rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  for (float& v : t.values) v = u(rng);
  return t;
}

inline Tile constant_tile(std::size_t bands, float value, std::size_t size = 32) {
  Tile t;
  t.size = size;
  t.bands = bands;
  t.values.assign(bands * size * size, value);
  return t;
}

inline nn::Tensor<double> random_tensor(const nn::Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  nn::Tensor<double> t(shape);
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& v : t.data) v = u(rng);
  return t;
}

inline std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  std::vector<double> v(n);
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (double& x : v) x = u(rng);
  return v;
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("lrc_test_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
};

}  // namespace lrc::test
