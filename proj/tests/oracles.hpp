// SPDX-License-Identifier: Apache-2.0
// Independent reference implementations. Each one is written directly from
// the defining formula, without sharing code with the library.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <vector>

namespace lrc::oracle {

/// Direct-loop cross-correlation of a (Cin, H, W) input with (Cout, Cin, k, k)
/// weights; zero padding of (k-1)*d/2 for "same", none for "valid".
inline std::vector<double> conv2d(const std::vector<double>& x, std::size_t cin, std::size_t h, std::size_t w,
                                  const std::vector<double>& k, std::size_t cout, std::size_t ks, std::size_t dil,
                                  std::size_t stride, bool same, std::size_t& oh, std::size_t& ow) {
  const long ext = static_cast<long>((ks - 1) * dil + 1);
  const long pad = same ? (ext - 1) / 2 : 0;
  oh = static_cast<std::size_t>((static_cast<long>(h) + 2 * pad - ext) / static_cast<long>(stride) + 1);
  ow = static_cast<std::size_t>((static_cast<long>(w) + 2 * pad - ext) / static_cast<long>(stride) + 1);
  std::vector<double> out(cout * oh * ow, 0.0);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xx = 0; xx < ow; ++xx) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cin; ++c)
          for (std::size_t ky = 0; ky < ks; ++ky)
            for (std::size_t kx = 0; kx < ks; ++kx) {
              const long iy = static_cast<long>(y * stride) - pad + static_cast<long>(ky * dil);
              const long ix = static_cast<long>(xx * stride) - pad + static_cast<long>(kx * dil);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
              acc += k[((o * cin + c) * ks + ky) * ks + kx] *
                     x[(c * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
            }
        out[(o * oh + y) * ow + xx] = acc;
      }
  return out;
}

/// Average precision by enumerating every distinct threshold t (descending)
/// and counting the confusion matrix of "score >= t" from scratch.
inline double average_precision(const std::vector<double>& scores, const std::vector<bool>& labels) {
  std::vector<double> thresholds = scores;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  std::size_t positives = 0;
  for (bool l : labels) positives += l ? 1 : 0;
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      if (scores[i] < t) continue;
      if (labels[i]) ++tp; else ++fp;
    }
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

struct SignedRankTails {
  double w_plus, w_minus;
  double p_greater, p_less, p_two_sided;
};

/// Signed-rank statistic and p-values by listing all 2^n sign assignments of
/// the observed absolute ranks (average ranks for ties, zeros dropped).
inline SignedRankTails signed_rank_enumeration(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  const std::size_t n = d.size();
  std::vector<double> rank(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) less += 1;
      if (std::abs(d[j]) == std::abs(d[i])) equal += 1;
    }
    rank[i] = less + (equal + 1.0) / 2.0;
  }
  double wp = 0, wm = 0;
  for (std::size_t i = 0; i < n; ++i) (d[i] > 0 ? wp : wm) += rank[i];
  const double wmin = std::min(wp, wm);
  double le_wm = 0, le_wp = 0, le_min = 0;
  const std::uint64_t patterns = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < patterns; ++mask) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (mask >> i & 1U) s += rank[i];
    if (s <= wm + 1e-9) le_wm += 1;
    if (s <= wp + 1e-9) le_wp += 1;
    if (s <= wmin + 1e-9) le_min += 1;
  }
  const double total = static_cast<double>(patterns);
  return {wp, wm, le_wm / total, le_wp / total, std::min(1.0, 2.0 * le_min / total)};
}

/// Two-sided normal-approximation p-value for the signed-rank test, written
/// out from the textbook formula: mean n(n+1)/4, variance n(n+1)(2n+1)/24
/// minus sum(t^3 - t)/48 over tie groups, continuity correction 0.5.
inline double signed_rank_normal_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  const double n = static_cast<double>(d.size());
  double wp = 0, wm = 0, tie_term = 0;
  std::map<double, double> groups;
  for (double x : d) groups[std::abs(x)] += 1;
  for (double x : d) {
    double less = 0;
    for (double y : d) less += std::abs(y) < std::abs(x) ? 1 : 0;
    const double r = less + (groups[std::abs(x)] + 1) / 2;
    (x > 0 ? wp : wm) += r;
  }
  for (const auto& [v, t] : groups) tie_term += t * t * t - t;
  const double mean = n * (n + 1) / 4;
  const double sd = std::sqrt(n * (n + 1) * (2 * n + 1) / 24 - tie_term / 48);
  const double z = (std::min(wp, wm) - mean + 0.5) / sd;
  return std::min(1.0, std::erfc(-z / std::sqrt(2.0)));
}

/// Monte-Carlo estimate of KL(N(mu, diag(exp(lv))) || N(0, I)) as E_q[log q - log p].
inline double kl_monte_carlo(const std::vector<double>& mu, const std::vector<double>& lv, std::size_t draws,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  double acc = 0.0;
  for (std::size_t s = 0; s < draws; ++s) {
    double log_ratio = 0.0;
    for (std::size_t d = 0; d < mu.size(); ++d) {
      const double sd = std::exp(0.5 * lv[d]);
      const double eps = n01(rng);
      const double z = mu[d] + sd * eps;
      // log q - log p per dimension; the 2*pi terms cancel.
      log_ratio += -0.5 * eps * eps - std::log(sd) + 0.5 * z * z;
    }
    acc += log_ratio;
  }
  return acc / static_cast<double>(draws);
}

/// Major-axis slope from the principal eigenvector of the 2x2 sample covariance.
inline double major_axis_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, syy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  sxx /= n - 1;
  syy /= n - 1;
  sxy /= n - 1;
  const double tr = sxx + syy, det = sxx * syy - sxy * sxy;
  const double lambda = tr / 2 + std::sqrt(tr * tr / 4 - det);
  // (S - lambda I) v = 0 -> v = (sxy, lambda - sxx)
  return (lambda - sxx) / sxy;
}

/// Sampled, normalized 2-D Gaussian of odd size.
inline std::vector<double> gaussian2d(std::size_t size, double sigma) {
  const long r = static_cast<long>(size / 2);
  std::vector<double> k(size * size);
  double sum = 0;
  for (long y = -r; y <= r; ++y)
    for (long x = -r; x <= r; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2 * sigma * sigma));
      k[static_cast<std::size_t>((y + r) * static_cast<long>(size) + (x + r))] = v;
      sum += v;
    }
  for (double& v : k) v /= sum;
  return k;
}

/// Chi-square upper tail for even degrees of freedom: e^{-x/2} sum_{j<k/2} (x/2)^j / j!.
inline double chi2_sf_even(double x, int k) {
  double term = 1.0, sum = 0.0;
  for (int j = 0; j < k / 2; ++j) {
    if (j > 0) term *= (x / 2) / j;
    sum += term;
  }
  return std::exp(-x / 2) * sum;
}

/// Sample percentile by sorting and interpolating between neighbours.
inline double percentile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double rank = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (rank - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace lrc::oracle
