// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrc/changedet.hpp"
#include "lrc/score_map.hpp"
#include "lrc/synthgen.hpp"
#include "lrc/vae/config.hpp"

namespace lrc::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumeric = 3;

/// Input/output locations. Unset inputs default to the files `synth` writes
/// under `<out>/scenes`.
struct Paths {
  std::filesystem::path out = "run";
  std::optional<std::filesystem::path> pre, post, labels, checkpoint, preprocess, nominal_pre, nominal_post,
      alignment_samples;
  std::vector<std::filesystem::path> history, nominal_history, train_scenes;

  [[nodiscard]] std::filesystem::path scenes() const { return out / "scenes"; }
  [[nodiscard]] std::filesystem::path checkpoints() const { return out / "checkpoints"; }
  [[nodiscard]] std::filesystem::path scores() const { return out / "scores"; }
  [[nodiscard]] std::filesystem::path reports() const { return out / "reports"; }
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::size_t threads = 1;
  Paths paths;

  SynthConfig synth;
  std::size_t n_nominal = 4;

  double epsilon = 1e-6;

  vae::EncoderConfig encoder;
  vae::TrainConfig train;
  /// Cap on training tiles taken in scene order; 0 keeps all.
  std::size_t max_train_tiles = 200;

  std::vector<Method> methods{Method::lrc, Method::cosine, Method::cva, Method::irmad};
  ConfigTag config_tag = ConfigTag::four_band;
  CvaAggregate cva = CvaAggregate::mean;
  bool write_pgm = true;

  std::size_t n_boot = 1000;
  std::optional<Method> reference;
  std::string site = "synthetic";
};

/// Parses a run configuration; unknown top-level blocks are rejected.
RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

int cmd_synth(const RunConfig& cfg, std::ostream& log);
int cmd_train(const RunConfig& cfg, std::ostream& log);
int cmd_score(const RunConfig& cfg, std::ostream& log);
int cmd_eval(const RunConfig& cfg, std::ostream& log);
int cmd_report(const RunConfig& cfg, std::ostream& log);

/// Full command-line entry point; never throws, returns 0, 2 or 3.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lrc::cli
