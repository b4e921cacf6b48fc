// SPDX-License-Identifier: Apache-2.0
#include "lrc/vae/model.hpp"

#include <algorithm>
#include <cmath>

#include "lrc/nn/ops.hpp"

namespace lrc::vae {

using nn::Shape;
using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

std::string stage_name(std::size_t s) { return "enc.s" + std::to_string(s + 1); }

void add_conv(std::vector<std::pair<std::string, Shape>>& m, const std::string& name, std::size_t out,
              std::size_t in, std::size_t k) {
  m.emplace_back(name + ".w", Shape{out, in, k, k});
  m.emplace_back(name + ".b", Shape{out});
}

void add_norm(std::vector<std::pair<std::string, Shape>>& m, const std::string& name, std::size_t ch) {
  m.emplace_back(name + ".g", Shape{ch});
  m.emplace_back(name + ".b", Shape{ch});
}

std::vector<std::size_t> decoder_widths(const EncoderConfig& c) {
  const auto& w = c.stage_channels;
  return {w[2], w[1], w[0], w[0]};
}

}  // namespace

std::vector<std::pair<std::string, Shape>> parameter_manifest(const EncoderConfig& c) {
  c.validate();
  std::vector<std::pair<std::string, Shape>> m;
  const auto& w = c.stage_channels;
  std::size_t in = 2 * c.input_bands;
  for (std::size_t s = 0; s < 2; ++s) {
    const std::string base = stage_name(s);
    for (std::size_t i = 0; i < c.dilation_rates.size(); ++i)
      add_conv(m, base + ".branch" + std::to_string(i), w[s], in, 3);
    add_conv(m, base + ".fuse", w[s], w[s] * c.dilation_rates.size(), 1);
    add_norm(m, base + ".norm", w[s]);
    in = w[s];
  }
  for (std::size_t s = 2; s < 4; ++s) {
    for (std::size_t r = 0; r < c.residual_blocks; ++r) {
      const std::string base = stage_name(s) + ".res" + std::to_string(r);
      const std::size_t block_in = r == 0 ? in : w[s];
      add_conv(m, base + ".conv1", w[s], block_in, 3);
      add_norm(m, base + ".norm1", w[s]);
      add_conv(m, base + ".conv2", w[s], w[s], 3);
      add_norm(m, base + ".norm2", w[s]);
      if (block_in != w[s]) add_conv(m, base + ".skip", w[s], block_in, 1);
    }
    in = w[s];
  }
  m.emplace_back("enc.mu.w", Shape{c.latent_dim, w[3]});
  m.emplace_back("enc.mu.b", Shape{c.latent_dim});
  m.emplace_back("enc.logvar.w", Shape{c.latent_dim, w[3]});
  m.emplace_back("enc.logvar.b", Shape{c.latent_dim});

  const std::size_t entry = c.tile_size / 16;
  m.emplace_back("dec.proj.w", Shape{w[3] * entry * entry, c.latent_dim});
  m.emplace_back("dec.proj.b", Shape{w[3] * entry * entry});
  in = w[3];
  const auto dw = decoder_widths(c);
  for (std::size_t s = 0; s < 4; ++s) {
    const std::string base = "dec.s" + std::to_string(s + 1);
    add_conv(m, base + ".conv", dw[s], in, 3);
    add_norm(m, base + ".norm", dw[s]);
    in = dw[s];
  }
  add_conv(m, "dec.out", c.input_bands, in, 3);
  return m;
}

template <typename T>
VaeParams<T> VaeParams<T>::init(const EncoderConfig& config, std::uint64_t seed) {
  VaeParams p;
  p.config = config;
  p.seed = seed;
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& [name, shape] : parameter_manifest(config)) {
    Tensor<T> t(shape);
    const bool is_weight = name.ends_with(".w");
    const bool is_norm_scale = name.ends_with(".g");
    if (is_norm_scale) {
      std::fill(t.data.begin(), t.data.end(), T(1));
    } else if (is_weight) {
      const std::size_t fan_in = nn::numel(shape) / shape[0];
      double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
      if (name == "enc.mu.w") std_dev = std::sqrt(1.0 / static_cast<double>(fan_in));
      if (name == "enc.logvar.w") std_dev = 0.01 * std::sqrt(1.0 / static_cast<double>(fan_in));
      if (name == "dec.out.w") std_dev = std::sqrt(1.0 / static_cast<double>(fan_in));
      for (T& v : t.data) v = static_cast<T>(std_dev * normal(rng));
    }
    p.params.push_back({name, std::move(t), {}});
  }
  p.rebuild_index();
  return p;
}

template <typename T>
void VaeParams<T>::rebuild_index() {
  index_.clear();
  for (std::size_t i = 0; i < params.size(); ++i) index_.emplace(params[i].name, i);
}

template <typename T>
std::size_t VaeParams<T>::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  require(it != index_.end(), Errc::checkpoint, "model has no parameter '" + std::string(name) + "'");
  return it->second;
}

template <typename T>
std::size_t VaeParams<T>::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> tile_tensor(const Tile& tile) {
  Tensor<T> t({tile.bands, tile.size, tile.size});
  std::copy(tile.values.begin(), tile.values.end(), t.data.begin());
  return t;
}

FreqParts freq_decompose(const Tensor<double>& tile, std::size_t kernel_size, double sigma) {
  Tape<double> tape;
  const Var x = tape.input(tile);
  const Var low = nn::gaussian_lowpass(tape, x, kernel_size, sigma);
  FreqParts parts{tape.value(low), Tensor<double>(tile.shape)};
  constexpr double grid = 0x1p24;
  for (std::size_t i = 0; i < tile.size(); ++i) {
    double l = std::nearbyint(parts.low[i] * grid) / grid;
    double h = tile[i] - l;
    // Only inputs with magnitude below ~2^-28 can make the subtraction inexact.
    if (l + h != tile[i]) {
      l = 0.0;
      h = tile[i];
    }
    parts.low[i] = l;
    parts.high[i] = h;
  }
  return parts;
}

FreqParts freq_decompose(const Tile& tile, std::size_t kernel_size, double sigma) {
  return freq_decompose(tile_tensor<double>(tile), kernel_size, sigma);
}

template <typename T>
Tensor<T> encoder_input(const Tensor<T>& tile, const EncoderConfig& config) {
  require(tile.rank() == 3 && tile.dim(0) == config.input_bands && tile.dim(1) == config.tile_size &&
              tile.dim(2) == config.tile_size,
          Errc::shape,
          "tile " + nn::shape_str(tile.shape) + " does not match encoder config (" +
              std::to_string(config.input_bands) + " bands, " + std::to_string(config.tile_size) + " px)");
  const FreqParts parts = freq_decompose(tile.template cast<double>(), config.lowpass_kernel, config.lowpass_sigma);
  Tensor<T> out({2 * tile.dim(0), tile.dim(1), tile.dim(2)});
  std::copy(parts.low.data.begin(), parts.low.data.end(), out.data.begin());
  std::copy(parts.high.data.begin(), parts.high.data.end(),
            out.data.begin() + static_cast<std::ptrdiff_t>(parts.low.size()));
  return out;
}

// ---------------------------------------------------------------------------

template <typename T>
Bound<T>::Bound(Tape<T>& tape, const VaeParams<T>& params, bool requires_grad) : tape_(tape), params_(params) {
  vars_.reserve(params.params.size());
  for (const auto& p : params.params) vars_.push_back(tape.parameter(p.value, requires_grad));
}

template <typename T>
Bound<T>::Bound(Tape<T>& tape, const VaeParams<T>& params, std::vector<Var> vars)
    : tape_(tape), params_(params), vars_(std::move(vars)) {
  require(vars_.size() == params.params.size(), Errc::shape, "bound vars do not match parameter count");
}

namespace {

template <typename T>
Var conv(const Bound<T>& b, Var x, const std::string& name, nn::ConvSpec spec = {}) {
  return nn::conv2d(b.tape(), x, b(name + ".w"), b(name + ".b"), spec);
}

template <typename T>
Var norm(const Bound<T>& b, Var x, const std::string& name) {
  return nn::channel_norm(b.tape(), x, b(name + ".g"), b(name + ".b"));
}

}  // namespace

template <typename T>
EncodeVars encode_graph(const Bound<T>& b, Var encoder_in) {
  auto& tape = b.tape();
  const auto& c = b.config();
  EncodeVars out;
  Var x = encoder_in;

  // Multi-scale stages: parallel dilated 3x3 branches fused by a 1x1 conv.
  for (std::size_t s = 0; s < 2; ++s) {
    const std::string base = stage_name(s);
    Var fused;
    for (std::size_t i = 0; i < c.dilation_rates.size(); ++i) {
      const Var br = conv(b, x, base + ".branch" + std::to_string(i), {1, c.dilation_rates[i], nn::Padding::zero_same});
      fused = i == 0 ? br : nn::concat_channels(tape, fused, br);
    }
    x = conv(b, fused, base + ".fuse");
    x = nn::leaky_relu(tape, norm(b, x, base + ".norm"));
    x = nn::blurpool_downsample(tape, x);
    out.stage_sizes.push_back(tape.value(x).dim(1));
  }

  for (std::size_t s = 2; s < 4; ++s) {
    for (std::size_t r = 0; r < c.residual_blocks; ++r) {
      const std::string base = stage_name(s) + ".res" + std::to_string(r);
      Var h = conv(b, x, base + ".conv1");
      h = nn::leaky_relu(tape, norm(b, h, base + ".norm1"));
      h = norm(b, conv(b, h, base + ".conv2"), base + ".norm2");
      const bool project = tape.value(x).dim(0) != c.stage_channels[s];
      const Var skip = project ? conv(b, x, base + ".skip") : x;
      x = nn::leaky_relu(tape, nn::add(tape, h, skip));
    }
    x = nn::blurpool_downsample(tape, x);
    out.stage_sizes.push_back(tape.value(x).dim(1));
  }

  const Var pooled = nn::global_avg_pool(tape, x);
  out.mu = nn::linear(tape, pooled, b("enc.mu.w"), b("enc.mu.b"));
  out.log_var = nn::linear(tape, pooled, b("enc.logvar.w"), b("enc.logvar.b"));
  return out;
}

template <typename T>
Var decode_graph(const Bound<T>& b, Var z) {
  auto& tape = b.tape();
  const auto& c = b.config();
  const std::size_t entry = c.tile_size / 16;
  Var x = nn::linear(tape, z, b("dec.proj.w"), b("dec.proj.b"));
  x = nn::reshape(tape, x, Shape{c.stage_channels[3], entry, entry});
  x = nn::leaky_relu(tape, x);
  for (std::size_t s = 0; s < 4; ++s) {
    const std::string base = "dec.s" + std::to_string(s + 1);
    x = nn::nn_upsample(tape, x, 2);
    x = nn::leaky_relu(tape, norm(b, conv(b, x, base + ".conv"), base + ".norm"));
  }
  return conv(b, x, "dec.out");
}

template <typename T>
LatentPosterior encode(const Tile& tile, const VaeParams<T>& params) {
  Tape<T> tape;
  Bound<T> b(tape, params, false);
  const Var in = tape.input(encoder_input(tile_tensor<T>(tile), params.config));
  const EncodeVars ev = encode_graph(b, in);
  LatentPosterior post;
  const auto& mu = tape.value(ev.mu);
  const auto& lv = tape.value(ev.log_var);
  post.mu.assign(mu.data.begin(), mu.data.end());
  for (T v : lv.data) post.log_var.push_back(std::clamp(static_cast<double>(v), kLogVarMin, kLogVarMax));
  return post;
}

template <typename T>
Tensor<T> decode(std::span<const double> z, const VaeParams<T>& params) {
  require(z.size() == params.config.latent_dim, Errc::shape, "latent length does not match config");
  Tape<T> tape;
  Bound<T> b(tape, params, false);
  Tensor<T> zt(Shape{z.size()});
  std::copy(z.begin(), z.end(), zt.data.begin());
  return tape.value(decode_graph(b, tape.input(std::move(zt))));
}

std::vector<double> reparameterize(const LatentPosterior& post, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(post.mu.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = post.mu[i] + std::exp(0.5 * post.log_var[i]) * normal(rng);
  return z;
}

LossTerms vae_loss(std::span<const double> tile, std::span<const double> reconstruction, const LatentPosterior& post,
                   double beta) {
  require(tile.size() == reconstruction.size() && !tile.empty(), Errc::shape, "reconstruction shape mismatch");
  require(post.mu.size() == post.log_var.size(), Errc::shape, "posterior length mismatch");
  LossTerms l;
  for (std::size_t i = 0; i < tile.size(); ++i) {
    const double d = reconstruction[i] - tile[i];
    l.recon_mse += d * d;
  }
  l.recon_mse /= static_cast<double>(tile.size());
  for (std::size_t d = 0; d < post.mu.size(); ++d)
    l.kl += post.mu[d] * post.mu[d] + std::exp(post.log_var[d]) - 1.0 - post.log_var[d];
  l.kl *= 0.5;
  l.total = l.recon_mse + beta * l.kl;
  require(std::isfinite(l.total), Errc::divergence, "non-finite VAE loss");
  return l;
}

template <typename T>
Var sample_objective(const Bound<T>& b, const Tensor<T>& tile, const Tensor<T>& noise, LossTerms* terms) {
  auto& tape = b.tape();
  const Var in = tape.input(encoder_input(tile, b.config()));
  const EncodeVars ev = encode_graph(b, in);
  const Var lv = nn::clamp(tape, ev.log_var, kLogVarMin, kLogVarMax);
  const Var z = nn::reparameterize(tape, ev.mu, lv, noise);
  const Var recon = decode_graph(b, z);
  const Var rec_loss = nn::mse(tape, recon, tile);
  const Var kl = nn::kl_standard_normal(tape, ev.mu, lv);
  const Var total = nn::add_scaled(tape, rec_loss, kl, b.config().beta);
  if (terms) {
    terms->recon_mse = tape.value(rec_loss)[0];
    terms->kl = tape.value(kl)[0];
    terms->total = tape.value(total)[0];
  }
  return total;
}

// ---------------------------------------------------------------------------

Tile resample_bilinear(const Tile& tile, std::size_t out_size) {
  require(out_size >= 1, Errc::domain, "resample target must be at least 1 px");
  Tile out = tile;
  out.size = out_size;
  out.values.assign(out_size * out_size * tile.bands, 0.0f);
  const double ratio = static_cast<double>(tile.size) / static_cast<double>(out_size);
  const auto max_idx = static_cast<double>(tile.size - 1);
  std::vector<std::size_t> i0(out_size), i1(out_size);
  std::vector<double> frac(out_size);
  for (std::size_t o = 0; o < out_size; ++o) {
    const double src = std::clamp((static_cast<double>(o) + 0.5) * ratio - 0.5, 0.0, max_idx);
    i0[o] = static_cast<std::size_t>(std::floor(src));
    i1[o] = std::min(i0[o] + 1, tile.size - 1);
    frac[o] = src - static_cast<double>(i0[o]);
  }
  for (std::size_t b = 0; b < tile.bands; ++b)
    for (std::size_t y = 0; y < out_size; ++y)
      for (std::size_t x = 0; x < out_size; ++x) {
        const double fy = frac[y], fx = frac[x];
        const double top = (1.0 - fx) * tile.at(b, i0[y], i0[x]) + fx * tile.at(b, i0[y], i1[x]);
        const double bot = (1.0 - fx) * tile.at(b, i1[y], i0[x]) + fx * tile.at(b, i1[y], i1[x]);
        out.at(b, y, x) = static_cast<float>((1.0 - fy) * top + fy * bot);
      }
  return out;
}

Tile scale_augment(const Tile& tile, double s) {
  require(s > 0.0 && s <= 1.0, Errc::domain, "augmentation scale must be in (0, 1]");
  const auto small = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(tile.size) * s)));
  if (small == tile.size) return tile;
  return resample_bilinear(resample_bilinear(tile, small), tile.size);
}

Tile scale_augment(const Tile& tile, Rng& rng, double scale_min, double scale_max) {
  std::uniform_real_distribution<double> dist(scale_min, scale_max);
  return scale_augment(tile, dist(rng));
}

#define LRC_INSTANTIATE_VAE(T)                                                                          \
  template struct VaeParams<T>;                                                                         \
  template class Bound<T>;                                                                              \
  template Tensor<T> tile_tensor<T>(const Tile&);                                                       \
  template Tensor<T> encoder_input<T>(const Tensor<T>&, const EncoderConfig&);                          \
  template EncodeVars encode_graph<T>(const Bound<T>&, Var);                                            \
  template Var decode_graph<T>(const Bound<T>&, Var);                                                   \
  template LatentPosterior encode<T>(const Tile&, const VaeParams<T>&);                                 \
  template Tensor<T> decode<T>(std::span<const double>, const VaeParams<T>&);                           \
  template Var sample_objective<T>(const Bound<T>&, const Tensor<T>&, const Tensor<T>&, LossTerms*);

LRC_INSTANTIATE_VAE(float)
LRC_INSTANTIATE_VAE(double)

#undef LRC_INSTANTIATE_VAE

}  // namespace lrc::vae
