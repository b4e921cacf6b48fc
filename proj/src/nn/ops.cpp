// SPDX-License-Identifier: Apache-2.0
#include "lrc/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include <Eigen/Core>

namespace lrc::nn {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  require(s.size() == rank, Errc::shape, std::string(what) + " expects rank " + std::to_string(rank) + ", got " +
                                             shape_str(s));
}

std::ptrdiff_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
  }
  return i;
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d via im2col + GEMM

template <typename T>
Var conv2d(Tape<T>& tape, Var input, Var kernel, Var bias, ConvSpec spec) {
  const Tensor<T>& x = tape.value(input);
  const Tensor<T>& w = tape.value(kernel);
  require_rank(x.shape, 3, "conv2d input");
  require_rank(w.shape, 4, "conv2d kernel");
  const std::size_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  require(w.dim(1) == cin, Errc::shape, "conv2d kernel expects " + std::to_string(w.dim(1)) +
                                            " input channels, got " + std::to_string(cin));
  require(w.dim(3) == k && k % 2 == 1, Errc::shape, "conv2d kernel must be square with odd size");
  require(spec.stride >= 1 && spec.dilation >= 1, Errc::shape, "conv2d stride and dilation must be >= 1");
  if (bias.valid()) require(tape.value(bias).size() == cout, Errc::shape, "conv2d bias length mismatch");

  const std::size_t extent = (k - 1) * spec.dilation + 1;
  const std::size_t pad = spec.padding == Padding::zero_same ? (extent - 1) / 2 : 0;
  require(h + 2 * pad >= extent && wd + 2 * pad >= extent, Errc::shape,
          "conv2d input " + shape_str(x.shape) + " smaller than effective kernel extent " + std::to_string(extent));
  const std::size_t ho = (h + 2 * pad - extent) / spec.stride + 1;
  const std::size_t wo = (wd + 2 * pad - extent) / spec.stride + 1;
  const std::size_t kk = cin * k * k;
  const std::size_t n = ho * wo;

  auto cols = std::make_shared<AlignedVector<T>>(kk * n, T(0));
  for (std::size_t ci = 0; ci < cin; ++ci)
    for (std::size_t ky = 0; ky < k; ++ky)
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols->data() + ((ci * k + ky) * k + kx) * n;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * spec.stride + ky * spec.dilation) -
                          static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          const T* src = x.data.data() + (ci * h + static_cast<std::size_t>(iy)) * wd;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * spec.stride + kx * spec.dilation) -
                            static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
            row[oy * wo + ox] = src[ix];
          }
        }
      }

  Tensor<T> out({cout, ho, wo});
  {
    CMapR<T> wm(w.data.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(kk));
    CMapR<T> cm(cols->data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(n));
    MapR<T> om(out.data.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(n));
    om.noalias() = wm * cm;
    if (bias.valid()) {
      const Tensor<T>& b = tape.value(bias);
      for (std::size_t c = 0; c < cout; ++c) om.row(static_cast<Eigen::Index>(c)).array() += b[c];
    }
  }

  const bool rg = tape.any_requires_grad({input, kernel, bias});
  return tape.push(std::move(out), rg, [=](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    CMapR<T> gm(g.data.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(n));
    if (t.requires_grad(kernel)) {
      Tensor<T>& gw = t.grad(kernel);
      MapR<T> gwm(gw.data.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(kk));
      CMapR<T> cm(cols->data(), static_cast<Eigen::Index>(kk), static_cast<Eigen::Index>(n));
      gwm.noalias() += gm * cm.transpose();
    }
    if (bias.valid() && t.requires_grad(bias)) {
      Tensor<T>& gb = t.grad(bias);
      for (std::size_t c = 0; c < cout; ++c) gb[c] += gm.row(static_cast<Eigen::Index>(c)).sum();
    }
    if (t.requires_grad(input)) {
      const Tensor<T>& wv = t.value(kernel);
      CMapR<T> wm(wv.data.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(kk));
      MatR<T> dcols = wm.transpose() * gm;
      Tensor<T>& gx = t.grad(input);
      for (std::size_t ci = 0; ci < cin; ++ci)
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) {
            const T* row = dcols.data() + ((ci * k + ky) * k + kx) * n;
            for (std::size_t oy = 0; oy < ho; ++oy) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * spec.stride + ky * spec.dilation) -
                              static_cast<std::ptrdiff_t>(pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
              T* dst = gx.data.data() + (ci * h + static_cast<std::size_t>(iy)) * wd;
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * spec.stride + kx * spec.dilation) -
                                static_cast<std::ptrdiff_t>(pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(wd)) continue;
                dst[ix] += row[oy * wo + ox];
              }
            }
          }
    }
  });
}

// ---------------------------------------------------------------------------
// fixed depthwise filters

std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
  require(size % 2 == 1, Errc::shape, "Gaussian kernel size must be odd");
  require(sigma > 0.0, Errc::domain, "Gaussian sigma must be positive");
  const auto r = static_cast<std::ptrdiff_t>(size / 2);
  std::vector<double> g1(size);
  double sum = 0.0;
  for (std::ptrdiff_t i = -r; i <= r; ++i) {
    g1[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    sum += g1[static_cast<std::size_t>(i + r)];
  }
  for (double& v : g1) v /= sum;
  std::vector<double> g2(size * size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) g2[y * size + x] = g1[y] * g1[x];
  return g2;
}

std::vector<double> binomial3_kernel() {
  const double b[3] = {1.0, 2.0, 1.0};
  std::vector<double> k(9);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x) k[y * 3 + x] = b[y] * b[x] / 16.0;
  return k;
}

template <typename T>
Var depthwise_reflect(Tape<T>& tape, Var input, const std::vector<double>& kernel, std::size_t stride) {
  const Tensor<T>& x = tape.value(input);
  require_rank(x.shape, 3, "depthwise filter input");
  const auto k = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(kernel.size()))));
  require(k * k == kernel.size() && k % 2 == 1, Errc::shape, "depthwise kernel must be square with odd size");
  require(stride == 1 || stride == 2, Errc::shape, "depthwise stride must be 1 or 2");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (stride == 2)
    require(h % 2 == 0 && w % 2 == 0, Errc::shape, "stride-2 downsampling needs even spatial dims, got " +
                                                       shape_str(x.shape));
  const std::size_t r = k / 2;
  require(r < h && r < w, Errc::shape, "reflect padding wider than the input");
  const std::size_t ho = h / stride, wo = w / stride;

  auto build = [&](std::size_t outn, std::size_t inn) {
    std::vector<std::size_t> idx(outn * k);
    for (std::size_t o = 0; o < outn; ++o)
      for (std::size_t u = 0; u < k; ++u)
        idx[o * k + u] = static_cast<std::size_t>(reflect_index(
            static_cast<std::ptrdiff_t>(o * stride + u) - static_cast<std::ptrdiff_t>(r),
            static_cast<std::ptrdiff_t>(inn)));
    return idx;
  };
  auto ry = std::make_shared<std::vector<std::size_t>>(build(ho, h));
  auto rx = std::make_shared<std::vector<std::size_t>>(build(wo, w));
  auto kern = std::make_shared<std::vector<T>>(kernel.begin(), kernel.end());

  Tensor<T> out({c, ho, wo});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t oy = 0; oy < ho; ++oy)
      for (std::size_t ox = 0; ox < wo; ++ox) {
        T acc = T(0);
        for (std::size_t u = 0; u < k; ++u) {
          const T* src = x.data.data() + (ch * h + (*ry)[oy * k + u]) * w;
          for (std::size_t v = 0; v < k; ++v) acc += (*kern)[u * k + v] * src[(*rx)[ox * k + v]];
        }
        out.at(ch, oy, ox) = acc;
      }

  return tape.push(std::move(out), tape.requires_grad(input), [=](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(input);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const T go = g.at(ch, oy, ox);
          for (std::size_t u = 0; u < k; ++u) {
            T* dst = gx.data.data() + (ch * h + (*ry)[oy * k + u]) * w;
            for (std::size_t v = 0; v < k; ++v) dst[(*rx)[ox * k + v]] += (*kern)[u * k + v] * go;
          }
        }
  });
}

template <typename T>
Var gaussian_lowpass(Tape<T>& tape, Var input, std::size_t kernel_size, double sigma) {
  return depthwise_reflect(tape, input, gaussian_kernel(kernel_size, sigma), 1);
}

template <typename T>
Var blurpool_downsample(Tape<T>& tape, Var input) {
  return depthwise_reflect(tape, input, binomial3_kernel(), 2);
}

// ---------------------------------------------------------------------------
// point-wise and normalization

template <typename T>
Var leaky_relu(Tape<T>& tape, Var input, double slope) {
  Tensor<T> out = tape.value(input);
  const T s = static_cast<T>(slope);
  for (T& v : out.data)
    if (v < T(0)) v *= s;
  if (tape.tracking_branches())
    for (T v : out.data) tape.mix_branch(v < T(0) ? 1 : 0);
  return tape.push(std::move(out), tape.requires_grad(input), [=](Tape<T>& t, Var self) {
    const Tensor<T>& x = t.value(input);
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(input);
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += x[i] >= T(0) ? g[i] : s * g[i];
  });
}

template <typename T>
Var normalize_channels(Tape<T>& tape, Var input) {
  const Tensor<T>& x = tape.value(input);
  require_rank(x.shape, 3, "channel_norm input");
  const std::size_t c = x.dim(0);
  const std::size_t plane = x.dim(1) * x.dim(2);
  require(plane >= 2, Errc::shape, "channel_norm needs at least 2 spatial elements per channel");
  Tensor<T> out(x.shape);
  auto inv_std = std::make_shared<std::vector<T>>(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const auto xs = x.channel(ch);
    T mean = T(0);
    for (T v : xs) mean += v;
    mean /= static_cast<T>(plane);
    T var = T(0);
    for (T v : xs) var += (v - mean) * (v - mean);
    var /= static_cast<T>(plane);
    const T inv = T(1) / std::sqrt(var + static_cast<T>(kNormEpsilon));
    (*inv_std)[ch] = inv;
    auto ys = out.channel(ch);
    for (std::size_t i = 0; i < plane; ++i) ys[i] = (xs[i] - mean) * inv;
  }
  return tape.push(std::move(out), tape.requires_grad(input), [=](Tape<T>& t, Var self) {
    const Tensor<T>& y = t.value(self);
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(input);
    const auto n = static_cast<T>(plane);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const auto ys = y.channel(ch);
      const auto gs = g.channel(ch);
      auto dx = gx.channel(ch);
      T sum_g = T(0), sum_gy = T(0);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_g += gs[i];
        sum_gy += gs[i] * ys[i];
      }
      const T inv = (*inv_std)[ch];
      for (std::size_t i = 0; i < plane; ++i) dx[i] += inv * (gs[i] - sum_g / n - ys[i] * sum_gy / n);
    }
  });
}

template <typename T>
Var channel_affine(Tape<T>& tape, Var input, Var gamma, Var beta) {
  const Tensor<T>& x = tape.value(input);
  require_rank(x.shape, 3, "channel_affine input");
  const std::size_t c = x.dim(0);
  const std::size_t plane = x.dim(1) * x.dim(2);
  const Tensor<T>& ga = tape.value(gamma);
  const Tensor<T>& be = tape.value(beta);
  require(ga.size() == c && be.size() == c, Errc::shape, "channel_affine parameter length mismatch");
  Tensor<T> out(x.shape);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const auto xs = x.channel(ch);
    auto ys = out.channel(ch);
    for (std::size_t i = 0; i < plane; ++i) ys[i] = ga[ch] * xs[i] + be[ch];
  }
  const bool rg = tape.any_requires_grad({input, gamma, beta});
  return tape.push(std::move(out), rg, [=](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    const Tensor<T>& xv = t.value(input);
    if (t.requires_grad(gamma) || t.requires_grad(beta)) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        const auto gs = g.channel(ch);
        const auto xs = xv.channel(ch);
        T sg = T(0), sgx = T(0);
        for (std::size_t i = 0; i < plane; ++i) {
          sg += gs[i];
          sgx += gs[i] * xs[i];
        }
        if (t.requires_grad(gamma)) t.grad(gamma)[ch] += sgx;
        if (t.requires_grad(beta)) t.grad(beta)[ch] += sg;
      }
    }
    if (t.requires_grad(input)) {
      const Tensor<T>& gav = t.value(gamma);
      Tensor<T>& gx = t.grad(input);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const auto gs = g.channel(ch);
        auto dx = gx.channel(ch);
        for (std::size_t i = 0; i < plane; ++i) dx[i] += gav[ch] * gs[i];
      }
    }
  });
}

// ---------------------------------------------------------------------------
// dense, resampling, pooling

template <typename T>
Var linear(Tape<T>& tape, Var input, Var weights, Var bias) {
  const Tensor<T>& x = tape.value(input);
  const Tensor<T>& w = tape.value(weights);
  const Tensor<T>& b = tape.value(bias);
  require_rank(w.shape, 2, "linear weights");
  const std::size_t out_n = w.dim(0), in_n = w.dim(1);
  require(x.size() == in_n, Errc::shape, "linear expects input length " + std::to_string(in_n) + ", got " +
                                             std::to_string(x.size()));
  require(b.size() == out_n, Errc::shape, "linear bias length mismatch");
  Tensor<T> out(Shape{out_n});
  {
    CMapR<T> wm(w.data.data(), static_cast<Eigen::Index>(out_n), static_cast<Eigen::Index>(in_n));
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xv(x.data.data(), static_cast<Eigen::Index>(in_n));
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> ov(out.data.data(), static_cast<Eigen::Index>(out_n));
    ov.noalias() = wm * xv;
    for (std::size_t i = 0; i < out_n; ++i) out[i] += b[i];
  }
  const bool rg = tape.any_requires_grad({input, weights, bias});
  return tape.push(std::move(out), rg, [=](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> gv(g.data.data(), static_cast<Eigen::Index>(out_n));
    if (t.requires_grad(weights)) {
      const Tensor<T>& xx = t.value(input);
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> xv(xx.data.data(), static_cast<Eigen::Index>(in_n));
      Tensor<T>& gw = t.grad(weights);
      MapR<T> gwm(gw.data.data(), static_cast<Eigen::Index>(out_n), static_cast<Eigen::Index>(in_n));
      gwm.noalias() += gv * xv.transpose();
    }
    if (t.requires_grad(bias)) {
      Tensor<T>& gb = t.grad(bias);
      for (std::size_t i = 0; i < out_n; ++i) gb[i] += g[i];
    }
    if (t.requires_grad(input)) {
      const Tensor<T>& wv = t.value(weights);
      CMapR<T> wm(wv.data.data(), static_cast<Eigen::Index>(out_n), static_cast<Eigen::Index>(in_n));
      Tensor<T>& gx = t.grad(input);
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gxv(gx.data.data(), static_cast<Eigen::Index>(in_n));
      gxv.noalias() += wm.transpose() * gv;
    }
  });
}

template <typename T>
Var nn_upsample(Tape<T>& tape, Var input, std::size_t factor) {
  const Tensor<T>& x = tape.value(input);
  require_rank(x.shape, 3, "nn_upsample input");
  require(factor >= 2, Errc::shape, "upsampling factor must be >= 2");
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  Tensor<T> out({c, h * factor, w * factor});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t y = 0; y < h * factor; ++y)
      for (std::size_t xx = 0; xx < w * factor; ++xx) out.at(ch, y, xx) = x.at(ch, y / factor, xx / factor);
  return tape.push(std::move(out), tape.requires_grad(input), [=](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(input);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < h * factor; ++y)
        for (std::size_t xx = 0; xx < w * factor; ++xx) gx.at(ch, y / factor, xx / factor) += g.at(ch, y, xx);
  });
}

template <typename T>
Var global_avg_pool(Tape<T>& tape, Var input) {
  const Tensor<T>& x = tape.value(input);
  require_rank(x.shape, 3, "global_avg_pool input");
  const std::size_t c = x.dim(0);
  const std::size_t plane = x.dim(1) * x.dim(2);
  Tensor<T> out(Shape{c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    T s = T(0);
    for (T v : x.channel(ch)) s += v;
    out[ch] = s / static_cast<T>(plane);
  }
  return tape.push(std::move(out), tape.requires_grad(input), [=](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(input);
    for (std::size_t ch = 0; ch < c; ++ch) {
      const T v = g[ch] / static_cast<T>(plane);
      for (T& d : gx.channel(ch)) d += v;
    }
  });
}

// ---------------------------------------------------------------------------
// structural

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  return add_scaled(tape, a, b, 1.0);
}

template <typename T>
Var add_scaled(Tape<T>& tape, Var a, Var b, double weight) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require(av.shape == bv.shape, Errc::shape, "add shape mismatch " + shape_str(av.shape) + " vs " +
                                                 shape_str(bv.shape));
  const T wt = static_cast<T>(weight);
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += wt * bv[i];
  return tape.push(std::move(out), tape.any_requires_grad({a, b}), [=](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(a)) {
      Tensor<T>& ga = t.grad(a);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& gb = t.grad(b);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += wt * g[i];
    }
  });
}

template <typename T>
Var concat_channels(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  require_rank(av.shape, 3, "concat input");
  require_rank(bv.shape, 3, "concat input");
  require(av.dim(1) == bv.dim(1) && av.dim(2) == bv.dim(2), Errc::shape, "concat spatial mismatch");
  const std::size_t na = av.size();
  Tensor<T> out({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
  std::copy(av.data.begin(), av.data.end(), out.data.begin());
  std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(na));
  return tape.push(std::move(out), tape.any_requires_grad({a, b}), [=](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(a)) {
      Tensor<T>& ga = t.grad(a);
      for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    }
    if (t.requires_grad(b)) {
      Tensor<T>& gb = t.grad(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
    }
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var input, Shape shape) {
  Tensor<T> out = tape.value(input);
  require(numel(shape) == out.size(), Errc::shape, "reshape to " + shape_str(shape) + " changes element count");
  out.shape = std::move(shape);
  return tape.push(std::move(out), tape.requires_grad(input), [=](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(input);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

template <typename T>
Var clamp(Tape<T>& tape, Var input, double lo, double hi) {
  Tensor<T> out = tape.value(input);
  if (tape.tracking_branches())
    for (T v : out.data) tape.mix_branch(v <= static_cast<T>(lo) ? 0 : v >= static_cast<T>(hi) ? 2 : 1);
  for (T& v : out.data) v = std::clamp(v, static_cast<T>(lo), static_cast<T>(hi));
  return tape.push(std::move(out), tape.requires_grad(input), [=](Tape<T>& t, Var self) {
    const Tensor<T>& x = t.value(input);
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& gx = t.grad(input);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] > static_cast<T>(lo) && x[i] < static_cast<T>(hi)) gx[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// losses and sampling

template <typename T>
Var mse(Tape<T>& tape, Var prediction, const Tensor<T>& target) {
  const Tensor<T>& p = tape.value(prediction);
  require(p.size() == target.size(), Errc::shape, "mse size mismatch");
  T s = T(0);
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - target[i]) * (p[i] - target[i]);
  const auto n = static_cast<T>(p.size());
  auto tgt = std::make_shared<Tensor<T>>(target);
  return tape.push(Tensor<T>(Shape{1}, s / n), tape.requires_grad(prediction), [=](Tape<T>& t, Var self) {
    const T g = t.grad(self)[0];
    const Tensor<T>& pv = t.value(prediction);
    Tensor<T>& gp = t.grad(prediction);
    for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += g * T(2) * (pv[i] - (*tgt)[i]) / n;
  });
}

template <typename T>
Var kl_standard_normal(Tape<T>& tape, Var mu, Var log_var) {
  const Tensor<T>& m = tape.value(mu);
  const Tensor<T>& lv = tape.value(log_var);
  require(m.size() == lv.size(), Errc::shape, "kl mu/log_var length mismatch");
  T s = T(0);
  for (std::size_t i = 0; i < m.size(); ++i) s += m[i] * m[i] + std::exp(lv[i]) - T(1) - lv[i];
  return tape.push(Tensor<T>(Shape{1}, T(0.5) * s), tape.any_requires_grad({mu, log_var}),
                   [=](Tape<T>& t, Var self) {
                     const T g = t.grad(self)[0];
                     if (t.requires_grad(mu)) {
                       const Tensor<T>& mv = t.value(mu);
                       Tensor<T>& gm = t.grad(mu);
                       for (std::size_t i = 0; i < mv.size(); ++i) gm[i] += g * mv[i];
                     }
                     if (t.requires_grad(log_var)) {
                       const Tensor<T>& lvv = t.value(log_var);
                       Tensor<T>& gl = t.grad(log_var);
                       for (std::size_t i = 0; i < lvv.size(); ++i) gl[i] += g * T(0.5) * (std::exp(lvv[i]) - T(1));
                     }
                   });
}

template <typename T>
Var reparameterize(Tape<T>& tape, Var mu, Var log_var, const Tensor<T>& noise) {
  const Tensor<T>& m = tape.value(mu);
  const Tensor<T>& lv = tape.value(log_var);
  require(m.size() == lv.size() && m.size() == noise.size(), Errc::shape, "reparameterize length mismatch");
  Tensor<T> z(m.shape);
  for (std::size_t i = 0; i < m.size(); ++i) z[i] = m[i] + std::exp(T(0.5) * lv[i]) * noise[i];
  auto eta = std::make_shared<Tensor<T>>(noise);
  return tape.push(std::move(z), tape.any_requires_grad({mu, log_var}), [=](Tape<T>& t, Var self) {
    const Tensor<T>& g = t.grad(self);
    if (t.requires_grad(mu)) {
      Tensor<T>& gm = t.grad(mu);
      for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
    }
    if (t.requires_grad(log_var)) {
      const Tensor<T>& lvv = t.value(log_var);
      Tensor<T>& gl = t.grad(log_var);
      for (std::size_t i = 0; i < g.size(); ++i) gl[i] += g[i] * (*eta)[i] * T(0.5) * std::exp(T(0.5) * lvv[i]);
    }
  });
}

template <typename T>
Var weighted_sum(Tape<T>& tape, Var input, const Tensor<T>& weights) {
  const Tensor<T>& x = tape.value(input);
  require(x.size() == weights.size(), Errc::shape, "weighted_sum size mismatch");
  T s = T(0);
  for (std::size_t i = 0; i < x.size(); ++i) s += weights[i] * x[i];
  auto wts = std::make_shared<Tensor<T>>(weights);
  return tape.push(Tensor<T>(Shape{1}, s), tape.requires_grad(input), [=](Tape<T>& t, Var self) {
    const T g = t.grad(self)[0];
    Tensor<T>& gx = t.grad(input);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * (*wts)[i];
  });
}

#define LRC_INSTANTIATE_OPS(T)                                                                   \
  template Var conv2d<T>(Tape<T>&, Var, Var, Var, ConvSpec);                                     \
  template Var depthwise_reflect<T>(Tape<T>&, Var, const std::vector<double>&, std::size_t);     \
  template Var gaussian_lowpass<T>(Tape<T>&, Var, std::size_t, double);                          \
  template Var blurpool_downsample<T>(Tape<T>&, Var);                                            \
  template Var leaky_relu<T>(Tape<T>&, Var, double);                                             \
  template Var normalize_channels<T>(Tape<T>&, Var);                                             \
  template Var channel_affine<T>(Tape<T>&, Var, Var, Var);                                       \
  template Var linear<T>(Tape<T>&, Var, Var, Var);                                               \
  template Var nn_upsample<T>(Tape<T>&, Var, std::size_t);                                       \
  template Var global_avg_pool<T>(Tape<T>&, Var);                                                \
  template Var add<T>(Tape<T>&, Var, Var);                                                       \
  template Var add_scaled<T>(Tape<T>&, Var, Var, double);                                        \
  template Var concat_channels<T>(Tape<T>&, Var, Var);                                           \
  template Var reshape<T>(Tape<T>&, Var, Shape);                                                 \
  template Var clamp<T>(Tape<T>&, Var, double, double);                                          \
  template Var mse<T>(Tape<T>&, Var, const Tensor<T>&);                                          \
  template Var kl_standard_normal<T>(Tape<T>&, Var, Var);                                        \
  template Var reparameterize<T>(Tape<T>&, Var, Var, const Tensor<T>&);                          \
  template Var weighted_sum<T>(Tape<T>&, Var, const Tensor<T>&);

LRC_INSTANTIATE_OPS(float)
LRC_INSTANTIATE_OPS(double)

#undef LRC_INSTANTIATE_OPS

}  // namespace lrc::nn
