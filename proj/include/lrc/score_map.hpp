// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lrc {

enum class Method { lrc, cosine, cva, irmad };
enum class ConfigTag { four_band, eight_band, time_series };

std::string_view to_string(Method m) noexcept;
std::string_view to_string(ConfigTag t) noexcept;
Method parse_method(std::string_view s);
ConfigTag parse_config_tag(std::string_view s);

/// Score assigned to tiles excluded from scoring (nodata). Real scores are >= 0.
inline constexpr double kExcludedScore = -1.0;

/// Per-tile anomaly scores for one scene pair, row-major.
struct ScoreMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> scores;
  Method method = Method::lrc;
  ConfigTag config_tag = ConfigTag::four_band;
  std::optional<double> threshold;

  [[nodiscard]] static bool excluded(double s) noexcept { return s < 0.0; }
  [[nodiscard]] double at(std::size_t r, std::size_t c) const { return scores.at(r * cols + c); }
  void validate() const;
};

void save_score_map(const ScoreMap& map, const std::filesystem::path& path);
ScoreMap load_score_map(const std::filesystem::path& path);

}  // namespace lrc
