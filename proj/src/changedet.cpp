// SPDX-License-Identifier: Apache-2.0
#include "lrc/changedet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>

#include "lrc/parallel.hpp"
#include "lrc/preprocess.hpp"
#include "lrc/rng.hpp"

namespace lrc {

double cosine_distance(std::span<const double> u, std::span<const double> v) {
  require(u.size() == v.size() && !u.empty(), Errc::shape, "cosine_distance needs equal non-empty vectors");
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  require(nu > 0.0 && nv > 0.0, Errc::degenerate, "cosine distance of a zero vector");
  // sqrt(nu * nu) == nu exactly, so identical vectors give exactly 0.
  const double prod = nu * nv;
  const double denom = std::isnormal(prod) ? std::sqrt(prod) : std::sqrt(nu) * std::sqrt(nv);
  const double cos = dot / denom;
  return std::clamp(1.0 - cos, 0.0, 2.0);
}

std::vector<double> embed_tile(const Tile& tile, const vae::VaeParams<float>& params) {
  return vae::encode(tile, params).mu;
}

namespace {

template <typename F>
double min_over_history(const TilePair& pair, F&& score) {
  if (pair.pre_history.empty()) return score(pair.pre, pair.post);
  double best = std::numeric_limits<double>::infinity();
  for (const Tile& h : pair.pre_history) best = std::min(best, score(h, pair.post));
  return best;
}

std::vector<double> offset_flat(const Tile& t) {
  std::vector<double> v(t.values.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(t.values[i]) + 1.0;
  return v;
}

double tile_cva(const Tile& pre, const Tile& post, CvaAggregate agg) {
  require(pre.same_geometry(post), Errc::pairing, "CVA tiles differ in geometry");
  const std::size_t plane = pre.size * pre.size;
  double acc = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    double sq = 0.0;
    for (std::size_t b = 0; b < pre.bands; ++b) {
      const double d = static_cast<double>(post.values[b * plane + i]) - static_cast<double>(pre.values[b * plane + i]);
      sq += d * d;
    }
    const double mag = std::sqrt(sq);
    acc = agg == CvaAggregate::mean ? acc + mag : std::max(acc, mag);
  }
  return agg == CvaAggregate::mean ? acc / static_cast<double>(plane) : acc;
}

}  // namespace

double lrc_score(const TilePair& pair, const vae::VaeParams<float>& params) {
  const auto post = embed_tile(pair.post, params);
  return min_over_history(pair, [&](const Tile& pre, const Tile&) {
    return cosine_distance(embed_tile(pre, params), post);
  });
}

double pixel_cosine_score(const TilePair& pair) {
  return min_over_history(pair, [](const Tile& pre, const Tile& post) {
    require(pre.same_geometry(post), Errc::pairing, "cosine tiles differ in geometry");
    return cosine_distance(offset_flat(pre), offset_flat(post));
  });
}

double cva_score(const TilePair& pair, CvaAggregate agg) {
  return min_over_history(pair, [agg](const Tile& pre, const Tile& post) { return tile_cva(pre, post, agg); });
}

double chi2_sf(double x, double dof) {
  require(dof >= 1.0, Errc::domain, "chi-square degrees of freedom must be >= 1");
  require(x >= 0.0 && !std::isnan(x), Errc::domain, "chi-square statistic must be non-negative");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return boost::math::gamma_q(dof / 2.0, x / 2.0);
}

// ---------------------------------------------------------------------------
// IR-MAD

double IrmadModel::statistic(std::span<const double> x, std::span<const double> y) const {
  double t = 0.0;
  for (std::size_t k = 0; k < bands; ++k) {
    double m = 0.0;
    for (std::size_t j = 0; j < bands; ++j) m += a[k][j] * (x[j] - mean_pre[j]) - b[k][j] * (y[j] - mean_post[j]);
    if (m == 0.0) continue;
    t += m * m / std::max(mad_variance[k], std::numeric_limits<double>::min());
  }
  return t;
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Pixel-major copy of valid pixels: row i = (x_i, y_i).
struct PixelSample {
  MatrixXd x;
  MatrixXd y;
};

PixelSample collect_pixels(const SceneRaster& pre, const SceneRaster& post, const IrmadOptions& opt) {
  const auto& h = pre.header;
  std::vector<std::size_t> valid;
  valid.reserve(h.pixels());
  for (std::size_t r = 0; r < h.height; ++r)
    for (std::size_t c = 0; c < h.width; ++c)
      if (!pre.pixel_is_nodata(r, c) && !post.pixel_is_nodata(r, c)) valid.push_back(r * h.width + c);
  if (opt.max_pixels != 0 && valid.size() > opt.max_pixels) {
    Rng rng = make_rng(opt.seed, "irmad");
    std::shuffle(valid.begin(), valid.end(), rng);
    valid.resize(opt.max_pixels);
    std::sort(valid.begin(), valid.end());
  }
  require(valid.size() >= 10 * h.bands, Errc::domain, "IR-MAD needs at least 10*C valid pixels");
  PixelSample s{MatrixXd(static_cast<Eigen::Index>(valid.size()), static_cast<Eigen::Index>(h.bands)),
                MatrixXd(static_cast<Eigen::Index>(valid.size()), static_cast<Eigen::Index>(h.bands))};
  for (std::size_t i = 0; i < valid.size(); ++i)
    for (std::size_t b = 0; b < h.bands; ++b) {
      s.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) = pre.band(b)[valid[i]];
      s.y(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) = post.band(b)[valid[i]];
    }
  return s;
}

bool well_conditioned(const MatrixXd& cov) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  const double hi = es.eigenvalues().maxCoeff();
  return hi > 0.0 && es.eigenvalues().minCoeff() > 1e-12 * hi;
}

/// lambda = 1e-6 trace / C on the diagonal. Only used when the plain
/// covariance is near-singular, since any ridge breaks affine invariance.
bool regularize(MatrixXd& cov) {
  if (well_conditioned(cov)) return false;
  cov.diagonal().array() += 1e-6 * cov.trace() / static_cast<double>(cov.rows());
  return true;
}

}  // namespace

IrmadModel irmad_fit_pixels(const MatrixXd& x, const MatrixXd& y, const IrmadOptions& opt) {
  require(x.rows() == y.rows() && x.cols() == y.cols() && x.cols() > 0, Errc::shape,
          "IR-MAD pixel matrices differ in shape");
  const Eigen::Index c = x.cols();
  const Eigen::Index n = x.rows();
  require(n >= 10 * c, Errc::domain, "IR-MAD needs at least 10*C valid pixels");

  IrmadModel model;
  model.bands = static_cast<std::size_t>(c);
  VectorXd w = VectorXd::Ones(n);
  std::vector<double> prev_rho;

  for (std::size_t iter = 1; iter <= opt.max_iter; ++iter) {
    const double wsum = w.sum();
    require(wsum > 0.0, Errc::degenerate, "all IR-MAD weights vanished");
    const VectorXd mx = (x.transpose() * w) / wsum;
    const VectorXd my = (y.transpose() * w) / wsum;
    const MatrixXd xc = x.rowwise() - mx.transpose();
    const MatrixXd yc = y.rowwise() - my.transpose();
    MatrixXd sxx = xc.transpose() * w.asDiagonal() * xc / wsum;
    MatrixXd syy = yc.transpose() * w.asDiagonal() * yc / wsum;
    const MatrixXd sxy = xc.transpose() * w.asDiagonal() * yc / wsum;
    require(sxx.trace() > 0.0 && syy.trace() > 0.0, Errc::degenerate, "constant scene in IR-MAD fit");
    const bool rx = regularize(sxx);
    const bool ry = regularize(syy);
    model.ridge_applied = rx || ry;

    Eigen::LLT<MatrixXd> syy_llt(syy);
    require(syy_llt.info() == Eigen::Success && well_conditioned(sxx) && well_conditioned(syy), Errc::degenerate,
            "singular covariance in IR-MAD fit");

    MatrixXd lhs = sxy * syy_llt.solve(sxy.transpose());
    lhs = 0.5 * (lhs + lhs.transpose());
    Eigen::GeneralizedSelfAdjointEigenSolver<MatrixXd> ges(lhs, sxx);
    require(ges.info() == Eigen::Success, Errc::degenerate, "IR-MAD eigenproblem failed");

    // Eigen returns ascending eigenvalues; canonical order is descending rho.
    model.a.assign(static_cast<std::size_t>(c), {});
    model.b.assign(static_cast<std::size_t>(c), {});
    model.rho.assign(static_cast<std::size_t>(c), 0.0);
    model.mad_variance.assign(static_cast<std::size_t>(c), 0.0);
    for (Eigen::Index k = 0; k < c; ++k) {
      VectorXd a = ges.eigenvectors().col(c - 1 - k);
      a /= std::sqrt(a.dot(sxx * a));
      VectorXd b = syy_llt.solve(sxy.transpose() * a);
      const double bnorm = std::sqrt(b.dot(syy * b));
      if (bnorm > 0.0) b /= bnorm;
      else b.setZero();
      const double rho = std::clamp(a.dot(sxy * b), 0.0, 1.0);
      Eigen::Index imax = 0;
      a.cwiseAbs().maxCoeff(&imax);
      if (a(imax) < 0.0) {
        a = -a;
        b = -b;
      }
      const auto kk = static_cast<std::size_t>(k);
      model.a[kk].assign(a.data(), a.data() + c);
      model.b[kk].assign(b.data(), b.data() + c);
      model.rho[kk] = rho;
      model.mad_variance[kk] = 2.0 * std::max(1.0 - rho, kMinMadGap);
    }
    model.mean_pre.assign(mx.data(), mx.data() + c);
    model.mean_post.assign(my.data(), my.data() + c);
    model.iterations_used = iter;

    if (!prev_rho.empty()) {
      double delta = 0.0;
      for (std::size_t k = 0; k < model.rho.size(); ++k) delta = std::max(delta, std::abs(model.rho[k] - prev_rho[k]));
      model.last_delta = delta;
      if (delta < opt.tol) {
        model.converged = true;
        break;
      }
    }
    prev_rho = model.rho;

    std::vector<double> xi(static_cast<std::size_t>(c)), yi(static_cast<std::size_t>(c));
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) {
        xi[static_cast<std::size_t>(j)] = x(i, j);
        yi[static_cast<std::size_t>(j)] = y(i, j);
      }
      w(i) = chi2_sf(model.statistic(xi, yi), static_cast<double>(c));
    }
  }
  return model;
}

IrmadModel irmad_fit(const SceneRaster& pre, const SceneRaster& post, const IrmadOptions& opt) {
  require(pre.header.width == post.header.width && pre.header.height == post.header.height &&
              pre.header.bands == post.header.bands,
          Errc::shape, "IR-MAD scenes differ in shape or band count");
  const PixelSample px = collect_pixels(pre, post, opt);
  return irmad_fit_pixels(px.x, px.y, opt);
}

std::vector<double> irmad_statistic_map(const IrmadModel& model, const SceneRaster& pre, const SceneRaster& post) {
  const auto& h = pre.header;
  require(h.bands == model.bands && post.header.bands == model.bands, Errc::shape, "IR-MAD band count mismatch");
  std::vector<double> out(h.pixels(), kExcludedScore);
  std::vector<double> x(h.bands), y(h.bands);
  for (std::size_t r = 0; r < h.height; ++r)
    for (std::size_t c = 0; c < h.width; ++c) {
      if (pre.pixel_is_nodata(r, c) || post.pixel_is_nodata(r, c)) continue;
      for (std::size_t b = 0; b < h.bands; ++b) {
        x[b] = pre.at(b, r, c);
        y[b] = post.at(b, r, c);
      }
      out[r * h.width + c] = model.statistic(x, y);
    }
  return out;
}

double irmad_score(const TilePair& pair, const IrmadModel& model) {
  require(pair.pre.same_geometry(pair.post) && pair.pre.bands == model.bands, Errc::pairing,
          "IR-MAD tile geometry mismatch");
  const std::size_t plane = pair.pre.size * pair.pre.size;
  std::vector<double> x(model.bands), y(model.bands);
  double acc = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    for (std::size_t b = 0; b < model.bands; ++b) {
      x[b] = pair.pre.values[b * plane + i];
      y[b] = pair.post.values[b * plane + i];
    }
    acc += model.statistic(x, y);
  }
  return acc / static_cast<double>(plane);
}

ThresholdResult threshold_at_95(std::span<const double> nominal_scores, const ScoreMap& target) {
  std::vector<double> nominal;
  for (double s : nominal_scores)
    if (!ScoreMap::excluded(s)) nominal.push_back(s);
  require(!nominal.empty(), Errc::domain, "threshold needs at least one nominal score");
  ThresholdResult r;
  r.tau = percentile(nominal, 95.0);
  r.flagged.resize(target.scores.size());
  for (std::size_t i = 0; i < target.scores.size(); ++i)
    r.flagged[i] = !ScoreMap::excluded(target.scores[i]) && target.scores[i] > r.tau;
  return r;
}

// ---------------------------------------------------------------------------

ScoreMap score_scene(const SceneRaster& pre, const SceneRaster& post, Method method, const ScoreOptions& opt) {
  require(method != Method::lrc || opt.params != nullptr, Errc::usage, "LRC scoring requires a checkpoint");
  if (opt.params) {
    require(opt.params->config.input_bands == pre.header.bands, Errc::checkpoint,
            "checkpoint band count does not match the scenes");
    require(opt.params->config.tile_size == opt.tile_size, Errc::checkpoint,
            "checkpoint tile size does not match scoring tile size");
  }
  std::vector<const SceneRaster*> pres{&pre};
  for (const auto* h : opt.history) pres.push_back(h);
  const bool series = !opt.history.empty();

  const TileGrid post_grid = tile_scene(post, opt.tile_size);
  std::vector<TileGrid> pre_grids;
  for (const auto* s : pres) pre_grids.push_back(tile_scene(*s, opt.tile_size));
  const std::vector<TilePair> pairs =
      pair_tiles(pre_grids.front(), post_grid, series ? std::span<const TileGrid>(pre_grids) : std::span<const TileGrid>{});

  ScoreMap map;
  map.rows = post_grid.rows;
  map.cols = post_grid.cols;
  map.method = method;
  map.config_tag = opt.config_tag;
  map.scores.assign(pairs.size(), kExcludedScore);

  switch (method) {
    case Method::lrc: {
      // Embed every tile once, then compare.
      std::vector<std::vector<std::vector<double>>> pre_emb(pre_grids.size(),
                                                            std::vector<std::vector<double>>(pairs.size()));
      std::vector<std::vector<double>> post_emb(pairs.size());
      parallel_for(pairs.size(), opt.threads, [&](std::size_t i) {
        if (pairs[i].excluded) return;
        post_emb[i] = embed_tile(pairs[i].post, *opt.params);
        for (std::size_t g = 0; g < pre_grids.size(); ++g) pre_emb[g][i] = embed_tile(pre_grids[g].tiles[i], *opt.params);
      });
      for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].excluded) continue;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < pre_grids.size(); ++g) best = std::min(best, cosine_distance(pre_emb[g][i], post_emb[i]));
        map.scores[i] = best;
      }
      break;
    }
    case Method::cosine:
      parallel_for(pairs.size(), opt.threads, [&](std::size_t i) {
        if (!pairs[i].excluded) map.scores[i] = pixel_cosine_score(pairs[i]);
      });
      break;
    case Method::cva:
      parallel_for(pairs.size(), opt.threads, [&](std::size_t i) {
        if (!pairs[i].excluded) map.scores[i] = cva_score(pairs[i], opt.cva);
      });
      break;
    case Method::irmad: {
      std::vector<IrmadModel> models;
      for (const auto* s : pres) models.push_back(irmad_fit(*s, post, opt.irmad));
      parallel_for(pairs.size(), opt.threads, [&](std::size_t i) {
        if (pairs[i].excluded) return;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < models.size(); ++g) {
          TilePair p;
          p.pre = pre_grids[g].tiles[i];
          p.post = pairs[i].post;
          best = std::min(best, irmad_score(p, models[g]));
        }
        map.scores[i] = best;
      });
      break;
    }
  }
  return map;
}

}  // namespace lrc
