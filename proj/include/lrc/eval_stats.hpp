// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lrc/error.hpp"
#include "lrc/score_map.hpp"

namespace lrc {

struct LabeledScores {
  std::vector<double> scores;
  std::vector<bool> labels;
  std::string scene_id;

  [[nodiscard]] std::size_t size() const { return scores.size(); }
  [[nodiscard]] std::size_t positives() const;
  /// Equal lengths and finite scores.
  void validate() const;
  /// Subset selected by index (repeats allowed).
  [[nodiscard]] LabeledScores resample(std::span<const std::size_t> idx) const;
};

/// Builds labeled scores from a score map, skipping excluded tiles.
LabeledScores labeled_from_map(const ScoreMap& map, const std::vector<bool>& labels, std::string scene_id = {});

struct PRPoint {
  double threshold;
  double precision;
  double recall;
};

struct PRCurve {
  std::vector<PRPoint> points;
};

/// One point per distinct score, descending; ties form a single step.
PRCurve pr_curve(const LabeledScores& data);

/// Uninterpolated average precision, sum_i (R_i - R_{i-1}) P_i.
double auprc(const PRCurve& curve);
double auprc(const LabeledScores& data);

struct PRF {
  /// Empty when nothing is predicted positive.
  std::optional<double> precision;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Predictions are score > tau.
PRF prf_at_threshold(const LabeledScores& data, double tau);

struct Interval {
  double median = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Index sets for bootstrap resampling; draws without a positive are redrawn.
struct BootstrapPlan {
  std::vector<std::vector<std::size_t>> resamples;
  std::size_t redraws = 0;
};

BootstrapPlan bootstrap_plan(const std::vector<bool>& labels, std::size_t n_resamples, std::uint64_t seed);

/// Metric values that are NaN (undefined on a resample) are left out of the percentiles.
using Metric = std::function<double(const LabeledScores&)>;

struct BootstrapResult {
  Interval ci;
  std::vector<double> samples;
  std::size_t redraws = 0;
  std::size_t undefined = 0;
};

BootstrapResult bootstrap_ci(const LabeledScores& data, const Metric& metric, std::size_t n_resamples,
                             std::uint64_t seed, std::size_t threads = 1);
BootstrapResult bootstrap_ci(const LabeledScores& data, const Metric& metric, const BootstrapPlan& plan,
                             std::size_t threads = 1);

/// Percentile summary of a sample (2.5, 50, 97.5), NaN entries skipped.
Interval summarize(std::span<const double> samples);

enum class Alternative { two_sided, greater, less };
enum class WilcoxonMethod { automatic, exact, normal };

struct WilcoxonResult {
  double w = 0.0;  ///< min(W+, W-)
  double w_plus = 0.0;
  double w_minus = 0.0;
  std::size_t n = 0;  ///< non-zero differences
  double p_value = 1.0;
  bool exact = false;
};

/// Paired signed-rank test on a - b. Exact null distribution for n <= 25.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    Alternative alt = Alternative::two_sided,
                                    WilcoxonMethod method = WilcoxonMethod::automatic);

/// mean(d) / sd(d), sample standard deviation.
double cohens_d_paired(std::span<const double> diffs);

/// (a - b) / b.
double relative_improvement(double a, double b);

enum class EffectMode { per_resample, per_tile };

struct CompareOptions {
  std::size_t n_boot = 1000;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  Alternative alternative = Alternative::two_sided;
  EffectMode effect_mode = EffectMode::per_resample;
  /// Per-method decision thresholds for precision/recall/F1; methods without
  /// one get no PRF columns.
  std::map<Method, double> thresholds;
};

/// A statistic that may be undefined; `note` names the reason.
struct Flagged {
  std::optional<double> value;
  std::string note;
};

struct MethodReport {
  Method method = Method::lrc;
  double auprc_point = 0.0;
  Interval auprc;
  std::optional<Interval> precision;
  std::optional<Interval> recall;
  std::optional<Interval> f1;
  std::optional<double> threshold;
  Flagged p_vs_reference;
  std::map<std::string, Flagged> cohens_d;
  Flagged rel_improvement;
};

struct EvalReport {
  std::string site;
  ConfigTag config_tag = ConfigTag::four_band;
  Method reference = Method::irmad;
  std::size_t n_boot = 0;
  std::uint64_t seed = 0;
  std::size_t redraws = 0;
  std::vector<MethodReport> rows;
};

EvalReport compare_methods(const std::map<Method, LabeledScores>& per_method, Method reference,
                           const CompareOptions& options, std::string site = {},
                           ConfigTag config_tag = ConfigTag::four_band);

void save_reports_json(const std::vector<EvalReport>& reports, const std::filesystem::path& path);
void save_reports_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path);
std::vector<EvalReport> load_reports_json(const std::filesystem::path& path);

}  // namespace lrc
