// SPDX-License-Identifier: Apache-2.0
#include "lrc/vae/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "../binary_io.hpp"
#include "lrc/nn/ops.hpp"
#include "lrc/parallel.hpp"

namespace lrc::vae {

using nn::Tensor;
using nn::Var;
using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'L', 'R', 'C', 'V', 'A', 'E', '0', '1'};

struct SampleJob {
  Tile tile;
  Tensor<float> noise;
};

/// Forward + backward for one sample; writes parameter gradients into `grads`.
LossTerms sample_gradients(const VaeParams<float>& params, const SampleJob& job, std::vector<Tensor<float>>& grads) {
  nn::Tape<float> tape;
  Bound<float> b(tape, params, true);
  LossTerms terms;
  const Var total = sample_objective(b, tile_tensor<float>(job.tile), job.noise, &terms);
  if (!std::isfinite(terms.total)) return terms;
  tape.backward(total);
  grads.resize(params.params.size());
  for (std::size_t i = 0; i < params.params.size(); ++i) {
    const Var v = b.vars()[i];
    if (tape.has_grad(v)) {
      grads[i] = std::move(tape.grad(v));
    } else {
      grads[i] = Tensor<float>(params.params[i].value.shape);
    }
  }
  return terms;
}

LossTerms add_terms(LossTerms a, const LossTerms& b) {
  a.total += b.total;
  a.recon_mse += b.recon_mse;
  a.kl += b.kl;
  return a;
}

LossTerms scale_terms(LossTerms a, double s) {
  a.total *= s;
  a.recon_mse *= s;
  a.kl *= s;
  return a;
}

}  // namespace

LossTerms evaluate_loss(const VaeParams<float>& params, std::span<const Tile> tiles, std::size_t threads) {
  if (tiles.empty()) return {};
  std::vector<LossTerms> per(tiles.size());
  const Tensor<float> zero_noise(nn::Shape{params.config.latent_dim});
  parallel_for(tiles.size(), threads, [&](std::size_t i) {
    nn::Tape<float> tape;
    Bound<float> b(tape, params, false);
    sample_objective(b, tile_tensor<float>(tiles[i]), zero_noise, &per[i]);
  });
  LossTerms sum;
  for (const auto& t : per) sum = add_terms(sum, t);
  return scale_terms(sum, 1.0 / static_cast<double>(tiles.size()));
}

Checkpoint train(std::span<const Tile> tiles, std::span<const Tile> validation, const EncoderConfig& config,
                 const TrainConfig& tc) {
  config.validate();
  tc.validate();
  for (const auto& t : tiles)
    require(t.bands == config.input_bands && t.size == config.tile_size, Errc::shape,
            "training tile does not match encoder config");

  Checkpoint ckpt;
  ckpt.train_config = tc;
  ckpt.params = VaeParams<float>::init(config, substream_seed(tc.seed, "init"));
  if (tc.epochs == 0) return ckpt;

  std::vector<Tile> train_set(tiles.begin(), tiles.end());
  std::vector<Tile> val_set(validation.begin(), validation.end());
  if (val_set.empty() && tc.validation_fraction > 0.0) {
    Rng split = make_rng(tc.seed, "split");
    std::shuffle(train_set.begin(), train_set.end(), split);
    const auto n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(tc.validation_fraction * static_cast<double>(train_set.size()))));
    val_set.assign(train_set.end() - static_cast<std::ptrdiff_t>(n_val), train_set.end());
    train_set.resize(train_set.size() - n_val);
  }
  require(train_set.size() >= tc.batch_size, Errc::domain,
          "need at least batch_size (" + std::to_string(tc.batch_size) + ") training tiles, have " +
              std::to_string(train_set.size()));

  auto& params = ckpt.params;
  auto adam = nn::AdamState<float>::init(params.params);
  Rng shuffle_rng = make_rng(tc.seed, "shuffle");
  Rng augment_rng = make_rng(tc.seed, "augment");
  std::normal_distribution<float> normal(0.0f, 1.0f);
  const std::size_t threads = std::max<std::size_t>(1, tc.threads);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<std::vector<Tensor<float>>> slots(threads);
  std::vector<LossTerms> slot_terms(threads);
  std::optional<VaeParams<float>> best;
  double best_val = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    LossTerms epoch_sum;
    std::size_t seen = 0;
    for (std::size_t start = 0; start + tc.batch_size <= order.size(); start += tc.batch_size) {
      std::vector<SampleJob> jobs(tc.batch_size);
      for (std::size_t i = 0; i < tc.batch_size; ++i) {
        jobs[i].tile = scale_augment(train_set[order[start + i]], augment_rng, tc.scale_aug_min, tc.scale_aug_max);
        jobs[i].noise = Tensor<float>(nn::Shape{config.latent_dim});
        for (float& e : jobs[i].noise.data) e = normal(augment_rng);
      }
      for (auto& p : params.params) p.zero_grad();

      // Waves of `threads` samples; gradients are summed in sample order so the
      // result does not depend on the thread count.
      for (std::size_t w = 0; w < jobs.size(); w += threads) {
        const std::size_t n = std::min(threads, jobs.size() - w);
        parallel_for(n, threads, [&](std::size_t k) { slot_terms[k] = sample_gradients(params, jobs[w + k], slots[k]); });
        for (std::size_t k = 0; k < n; ++k) {
          if (!std::isfinite(slot_terms[k].total))
            throw TrainingDiverged("non-finite loss in epoch " + std::to_string(epoch), ckpt.history);
          epoch_sum = add_terms(epoch_sum, slot_terms[k]);
          for (std::size_t p = 0; p < params.params.size(); ++p) {
            auto& acc = params.params[p].grad.data;
            const auto& g = slots[k][p].data;
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
          }
        }
      }
      const float inv_b = 1.0f / static_cast<float>(tc.batch_size);
      for (auto& p : params.params)
        for (float& g : p.grad.data) g *= inv_b;
      try {
        nn::adam_step<float>(params.params, adam, tc.learning_rate);
      } catch (const Error& e) {
        throw TrainingDiverged(e.what(), ckpt.history);
      }
      seen += tc.batch_size;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train = scale_terms(epoch_sum, 1.0 / static_cast<double>(std::max<std::size_t>(seen, 1)));
    rec.validation = val_set.empty() ? rec.train : evaluate_loss(params, val_set, threads);
    if (!std::isfinite(rec.validation.total))
      throw TrainingDiverged("non-finite validation loss in epoch " + std::to_string(epoch), ckpt.history);
    ckpt.history.push_back(rec);
    if (rec.validation.total < best_val) {
      best_val = rec.validation.total;
      best = params;
      ckpt.best_epoch = epoch;
    }
  }
  if (best) {
    best->rebuild_index();
    for (auto& p : best->params) p.grad = {};
    ckpt.params = std::move(*best);
  }
  for (auto& p : ckpt.params.params) p.grad = {};
  return ckpt;
}

// ---------------------------------------------------------------------------

namespace {

json terms_json(const LossTerms& t) { return {{"total", t.total}, {"recon_mse", t.recon_mse}, {"kl", t.kl}}; }

LossTerms terms_from(const json& j) {
  return {j.at("total").get<double>(), j.at("recon_mse").get<double>(), j.at("kl").get<double>()};
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  json j;
  j["config"] = ckpt.params.config;
  j["train_config"] = ckpt.train_config;
  // Thread count is an execution detail; keeping it out makes files comparable across machines.
  j["train_config"].erase("threads");
  j["seed"] = ckpt.params.seed;
  j["best_epoch"] = ckpt.best_epoch;
  json manifest = json::array();
  for (const auto& p : ckpt.params.params) manifest.push_back({{"name", p.name}, {"shape", p.value.shape}});
  j["manifest"] = std::move(manifest);
  json hist = json::array();
  for (const auto& r : ckpt.history)
    hist.push_back({{"epoch", r.epoch}, {"train", terms_json(r.train)}, {"validation", terms_json(r.validation)}});
  j["history"] = std::move(hist);
  const std::string header = j.dump();

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), Errc::io, "cannot write " + path.string());
  os.write(kMagic, sizeof(kMagic));
  detail::write_u64_le(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (const auto& p : ckpt.params.params) detail::write_f32_le(os, p.value.data);
  require(static_cast<bool>(os), Errc::io, "write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, std::optional<std::size_t> expected_bands) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), Errc::checkpoint, "cannot open checkpoint " + path.string());
  char magic[8] = {};
  is.read(magic, sizeof(magic));
  require(is.gcount() == 8 && std::memcmp(magic, kMagic, 8) == 0, Errc::checkpoint, "bad checkpoint magic");
  std::uint64_t header_len = 0;
  require(detail::read_u64_le(is, header_len) && header_len < (1ULL << 32), Errc::checkpoint,
          "truncated checkpoint header");
  std::string header(header_len, '\0');
  is.read(header.data(), static_cast<std::streamsize>(header_len));
  require(static_cast<std::uint64_t>(is.gcount()) == header_len, Errc::checkpoint, "truncated checkpoint header");

  Checkpoint ckpt;
  try {
    const json j = json::parse(header);
    EncoderConfig cfg = j.at("config").get<EncoderConfig>();
    cfg.validate();
    ckpt.params.config = cfg;
    ckpt.params.seed = j.at("seed").get<std::uint64_t>();
    ckpt.train_config = j.at("train_config").get<TrainConfig>();
    ckpt.best_epoch = j.at("best_epoch").get<std::size_t>();
    const auto expected = parameter_manifest(cfg);
    const auto& manifest = j.at("manifest");
    require(manifest.size() == expected.size(), Errc::checkpoint, "manifest does not match embedded config");
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const auto name = manifest[i].at("name").get<std::string>();
      const auto shape = manifest[i].at("shape").get<nn::Shape>();
      require(name == expected[i].first && shape == expected[i].second, Errc::checkpoint,
              "manifest entry " + name + " does not match embedded config");
      ckpt.params.params.push_back({name, Tensor<float>(shape), {}});
    }
    for (const auto& r : j.at("history"))
      ckpt.history.push_back({r.at("epoch").get<std::size_t>(), terms_from(r.at("train")),
                              terms_from(r.at("validation"))});
  } catch (const json::exception& e) {
    fail(Errc::checkpoint, std::string("corrupt checkpoint header: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::checkpoint) throw;
    fail(Errc::checkpoint, e.what());
  }
  for (auto& p : ckpt.params.params)
    require(detail::read_f32_le(is, p.value.data), Errc::checkpoint, "truncated checkpoint payload");
  is.peek();
  require(is.eof(), Errc::checkpoint, "trailing bytes after checkpoint payload");
  ckpt.params.rebuild_index();
  if (expected_bands)
    require(*expected_bands == ckpt.params.config.input_bands, Errc::checkpoint,
            "checkpoint was trained on " + std::to_string(ckpt.params.config.input_bands) +
                " bands but the pipeline has " + std::to_string(*expected_bands));
  return ckpt;
}

void save_loss_history(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  require(static_cast<bool>(os), Errc::io, "cannot write " + path.string());
  os << "epoch,train_total,train_recon_mse,train_kl,val_total,val_recon_mse,val_kl\n";
  os.precision(17);
  for (const auto& r : history)
    os << r.epoch << ',' << r.train.total << ',' << r.train.recon_mse << ',' << r.train.kl << ','
       << r.validation.total << ',' << r.validation.recon_mse << ',' << r.validation.kl << '\n';
}

}  // namespace lrc::vae
