// SPDX-License-Identifier: Apache-2.0
#include "lrc/score_map.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "lrc/error.hpp"

namespace lrc {

using nlohmann::json;

std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::lrc: return "LRC";
    case Method::cosine: return "COSINE";
    case Method::cva: return "CVA";
    case Method::irmad: return "IRMAD";
  }
  return "?";
}

std::string_view to_string(ConfigTag t) noexcept {
  switch (t) {
    case ConfigTag::four_band: return "4-band";
    case ConfigTag::eight_band: return "8-band";
    case ConfigTag::time_series: return "time-series";
  }
  return "?";
}

Method parse_method(std::string_view s) {
  for (Method m : {Method::lrc, Method::cosine, Method::cva, Method::irmad})
    if (s == to_string(m)) return m;
  if (s == "lrc") return Method::lrc;
  if (s == "cosine") return Method::cosine;
  if (s == "cva") return Method::cva;
  if (s == "irmad" || s == "IR-MAD") return Method::irmad;
  fail(Errc::usage, "unknown method '" + std::string(s) + "'");
}

ConfigTag parse_config_tag(std::string_view s) {
  for (ConfigTag t : {ConfigTag::four_band, ConfigTag::eight_band, ConfigTag::time_series})
    if (s == to_string(t)) return t;
  fail(Errc::usage, "unknown config_tag '" + std::string(s) + "'");
}

void ScoreMap::validate() const {
  require(scores.size() == rows * cols, Errc::shape, "score count does not match rows x cols");
  for (double s : scores)
    require(excluded(s) || (std::isfinite(s) && s >= 0.0), Errc::domain, "score map holds an invalid score");
}

void save_score_map(const ScoreMap& map, const std::filesystem::path& path) {
  map.validate();
  json j;
  j["rows"] = map.rows;
  j["cols"] = map.cols;
  j["method"] = to_string(map.method);
  j["config_tag"] = to_string(map.config_tag);
  j["threshold"] = map.threshold ? json(*map.threshold) : json(nullptr);
  json arr = json::array();
  for (double s : map.scores) arr.push_back(ScoreMap::excluded(s) ? json(nullptr) : json(s));
  j["scores"] = std::move(arr);
  std::ofstream os(path, std::ios::trunc);
  require(static_cast<bool>(os), Errc::io, "cannot write " + path.string());
  os << j.dump(2) << '\n';
}

ScoreMap load_score_map(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), Errc::io, "cannot read " + path.string());
  ScoreMap map;
  try {
    json j = json::parse(is);
    map.rows = j.at("rows").get<std::size_t>();
    map.cols = j.at("cols").get<std::size_t>();
    map.method = parse_method(j.at("method").get<std::string>());
    map.config_tag = parse_config_tag(j.at("config_tag").get<std::string>());
    if (j.contains("threshold") && !j["threshold"].is_null()) map.threshold = j["threshold"].get<double>();
    for (const auto& v : j.at("scores")) map.scores.push_back(v.is_null() ? kExcludedScore : v.get<double>());
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::format, "corrupt score map " + path.string() + ": " + e.what());
  }
  map.validate();
  return map;
}

}  // namespace lrc
