// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "errc.hpp"
#include "helpers.hpp"
#include "lrc/changedet.hpp"
#include "lrc/synthgen.hpp"

using namespace lrc;

namespace {

SynthConfig quiet(std::uint64_t seed = 1) {
  SynthConfig c;
  c.width = 128;
  c.height = 128;
  c.n_burns = 0;
  c.nuisance_gain_min = c.nuisance_gain_max = 1.0;
  c.noise_sigma = 0.0;
  c.misregistration_px = 0;
  c.seed = seed;
  return c;
}

bool bitwise_equal(const SceneRaster& a, const SceneRaster& b) {
  return a.header == b.header && a.values.size() == b.values.size() &&
         std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(float)) == 0;
}

double correlation(std::span<const float> x, std::span<const float> y) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

TEST_CASE("background field") {
  for (std::size_t bands : {4, 8}) {
    SynthConfig c = quiet();
    c.bands = bands;
    Rng rng(3);
    const SceneRaster s = gen_background(c, rng);
    CHECK(s.header.band_names == synth_band_names(bands));
    for (float v : s.values) {
      CHECK(v >= 0.05f);
      CHECK(v <= 0.6f);
    }
    for (std::size_t b = 1; b < bands; ++b) CHECK(correlation(s.band(0), s.band(b)) >= 0.5);
  }
}

TEST_CASE("quiet pair is an identity") {
  const ScenePair p = gen_scene_pair(quiet());
  CHECK(bitwise_equal(p.pre, p.post));
  CHECK(p.labels.positives() == 0);

  ScoreOptions opts;
  opts.irmad.max_iter = 100;
  for (Method m : {Method::cosine, Method::cva, Method::irmad}) {
    CAPTURE(to_string(m));
    for (double s : score_scene(p.pre, p.post, m, opts).scores) CHECK(std::abs(s) < 1e-6);
  }
}

TEST_CASE("generation is a pure function of the config") {
  SynthConfig c;
  c.n_history = 2;
  const ScenePair a = gen_scene_pair(c), b = gen_scene_pair(c);
  CHECK(bitwise_equal(a.pre, b.pre));
  CHECK(bitwise_equal(a.post, b.post));
  CHECK(a.labels.labels == b.labels.labels);
  CHECK(a.labels.burned_fraction == b.labels.burned_fraction);
  REQUIRE(a.history.size() == 2);
  CHECK(bitwise_equal(a.history[1], b.history[1]));
  CHECK(bitwise_equal(gen_nominal_scene(c, 3), gen_nominal_scene(c, 3)));
  CHECK_FALSE(bitwise_equal(gen_nominal_scene(c, 3), gen_nominal_scene(c, 4)));
}

TEST_CASE("prevalence and labels") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SynthConfig c;
    c.seed = seed;
    const ScenePair p = gen_scene_pair(c);
    const auto& l = p.labels;
    const double total = static_cast<double>(l.rows * l.cols);
    CHECK(l.rows == 8);
    CHECK(l.cols == 8);
    const double prevalence = static_cast<double>(l.positives()) / total;
    CHECK(prevalence >= 0.05);
    CHECK(prevalence <= 0.10);
    CHECK(std::abs(static_cast<double>(l.positives()) - c.target_prevalence * total) <= 3.0);
    for (std::size_t i = 0; i < l.labels.size(); ++i) {
      CHECK(l.labels[i] == (l.burned_fraction[i] >= c.theta));
      CHECK(l.burned_fraction[i] >= 0.0);
      CHECK(l.burned_fraction[i] <= 1.0);
    }
  }
}

TEST_CASE("config validation") {
  SynthConfig c;
  c.target_prevalence = 0.5;
  CHECK_ERRC(c.validate(), Errc::domain);
  c = SynthConfig{};
  c.burn_visible_gain = 0.0;
  CHECK_ERRC(c.validate(), Errc::domain);
  c = SynthConfig{};
  c.misregistration_px = 3;
  CHECK_ERRC(c.validate(), Errc::domain);
  c = SynthConfig{};
  c.bands = 5;
  CHECK_ERRC(c.validate(), Errc::domain);
  c = SynthConfig{};
  c.n_burns = 40;
  CHECK_ERRC(gen_scene_pair(c), Errc::placement);

  c = SynthConfig{};
  c.noise_sigma = 0.003;
  c.nuisance_gain_min = 0.95;
  nlohmann::json j = c;
  CHECK(nlohmann::json(j.get<SynthConfig>()) == j);
}

TEST_CASE("burn injection") {
  SynthConfig c = quiet();
  Rng rng(1);
  const SceneRaster base = gen_background(c, rng);

  SUBCASE("identity gains leave the scene unchanged") {
    SynthConfig g = c;
    g.burn_visible_gain = g.burn_nir_gain = 1.0;
    SceneRaster s = base;
    Rng r(2);
    const PixelMask m = inject_burn(s, {60, 60, 20, 10, 0.3}, g, r);
    CHECK(bitwise_equal(s, base));
    CHECK(std::count(m.begin(), m.end(), 1) > 0);
  }
  SUBCASE("visible gain arithmetic without texture") {
    SynthConfig g = c;
    g.burn_texture_sigma = 0.0;
    SceneRaster s = base;
    for (float& v : s.values) v = 0.5f;
    const SceneRaster flat = s;
    Rng r(2);
    const PixelMask m = inject_burn(s, {60, 60, 20, 10, 0.3}, g, r);
    for (std::size_t i = 0; i < m.size(); ++i) {
      if (m[i]) {
        CHECK(s.band(0)[i] == doctest::Approx(0.2).epsilon(1e-6));
        CHECK(s.band(3)[i] == doctest::Approx(0.15).epsilon(1e-6));
      } else {
        CHECK(s.band(0)[i] == flat.band(0)[i]);
      }
    }
  }
  SUBCASE("mask area matches the ellipse") {
    for (std::uint64_t k = 0; k < 10; ++k) {
      const Ellipse e{64.0 + static_cast<double>(k), 60.0, 15.0 + 2.0 * static_cast<double>(k), 9.0,
                      0.4 * static_cast<double>(k)};
      SceneRaster s = base;
      Rng r(k);
      const PixelMask m = inject_burn(s, e, c, r);
      const double area = static_cast<double>(std::count(m.begin(), m.end(), 1));
      CHECK(e.area() == doctest::Approx(std::numbers::pi * e.semi_a * e.semi_b));
      CHECK(std::abs(area - e.area()) / e.area() <= 0.02);
    }
  }
  SUBCASE("NIR mean decreases inside the mask") {
    SynthConfig g = c;
    g.noise_sigma = 0.01;
    SceneRaster s = base;
    Rng r(4);
    const PixelMask m = inject_burn(s, {40, 40, 8, 6, 1.0}, g, r);
    Rng nr(5);
    const SceneRaster noisy = inject_nuisance(s, g, nr);
    double before = 0, after = 0, n = 0;
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i]) {
        before += base.band(3)[i];
        after += noisy.band(3)[i];
        n += 1;
      }
    CHECK(n >= 100);
    CHECK(after / n < before / n);
  }
  SUBCASE("regions outside the scene") {
    SceneRaster s = base;
    Rng r(1);
    CHECK_ERRC(inject_burn(s, {5, 60, 20, 10, 0.0}, c, r), Errc::domain);
  }
}

TEST_CASE("nuisance") {
  SynthConfig c = quiet();
  Rng rng(1);
  const SceneRaster base = gen_background(c, rng);

  Rng r0(2);
  CHECK(bitwise_equal(inject_nuisance(base, c, r0), base));

  SynthConfig g = c;
  g.nuisance_gain_min = g.nuisance_gain_max = 1.1;
  Rng r1(2);
  const SceneRaster gained = inject_nuisance(base, g, r1);
  for (std::size_t i = 0; i < base.values.size(); ++i)
    CHECK(gained.values[i] == doctest::Approx(base.values[i] * 1.1).epsilon(1e-6));

  SynthConfig m = c;
  m.misregistration_px = 2;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    Rng r(seed);
    NuisanceShift sh;
    const SceneRaster moved = inject_nuisance(base, m, r, &sh);
    CHECK(std::abs(sh.dx) <= 2);
    CHECK(std::abs(sh.dy) <= 2);
    const long w = 128, h = 128;
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        const long sy = y - sh.dy, sx = x - sh.dx;
        const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
        const float v = moved.at(0, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
        if (inside) CHECK(v == base.at(0, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx)));
        else CHECK(moved.is_nodata(v));
      }
  }
}

TEST_CASE("labels file round trip") {
  test::TempDir dir("labels");
  const ScenePair p = gen_scene_pair(SynthConfig{});
  save_labels(p.labels, dir.path / "labels.json");
  const SceneLabels back = load_labels(dir.path / "labels.json");
  CHECK(back.labels == p.labels.labels);
  CHECK(back.burned_fraction == p.labels.burned_fraction);
  CHECK(back.theta == p.labels.theta);
}
