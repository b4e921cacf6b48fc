// SPDX-License-Identifier: Apache-2.0
#include "lrc/eval_stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "lrc/parallel.hpp"
#include "lrc/preprocess.hpp"
#include "lrc/rng.hpp"

namespace lrc {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

std::size_t LabeledScores::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), true));
}

void LabeledScores::validate() const {
  require(scores.size() == labels.size(), Errc::shape, "scores and labels differ in length");
  for (double s : scores) require(std::isfinite(s), Errc::domain, "non-finite score");
}

LabeledScores LabeledScores::resample(std::span<const std::size_t> idx) const {
  LabeledScores out;
  out.scene_id = scene_id;
  out.scores.reserve(idx.size());
  out.labels.reserve(idx.size());
  for (std::size_t i : idx) {
    out.scores.push_back(scores[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

LabeledScores labeled_from_map(const ScoreMap& map, const std::vector<bool>& labels, std::string scene_id) {
  require(map.scores.size() == labels.size(), Errc::pairing, "score map and labels differ in tile count");
  LabeledScores out;
  out.scene_id = std::move(scene_id);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (ScoreMap::excluded(map.scores[i])) continue;
    out.scores.push_back(map.scores[i]);
    out.labels.push_back(labels[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------

PRCurve pr_curve(const LabeledScores& data) {
  data.validate();
  const std::size_t positives = data.positives();
  require(positives > 0, Errc::undefined_metric, "precision-recall curve needs at least one positive");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return data.scores[a] > data.scores[b]; });

  PRCurve curve;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (data.labels[order[i]]) ++tp; else ++fp;
    const bool group_end = i + 1 == order.size() || data.scores[order[i + 1]] != data.scores[order[i]];
    if (!group_end) continue;
    curve.points.push_back({data.scores[order[i]], static_cast<double>(tp) / static_cast<double>(tp + fp),
                            static_cast<double>(tp) / static_cast<double>(positives)});
  }
  return curve;
}

double auprc(const PRCurve& curve) {
  double area = 0.0, prev_recall = 0.0;
  for (const PRPoint& p : curve.points) {
    area += (p.recall - prev_recall) * p.precision;
    prev_recall = p.recall;
  }
  return area;
}

double auprc(const LabeledScores& data) { return auprc(pr_curve(data)); }

PRF prf_at_threshold(const LabeledScores& data, double tau) {
  data.validate();
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool pred = data.scores[i] > tau;
    if (pred && data.labels[i]) ++tp;
    else if (pred) ++fp;
    else if (data.labels[i]) ++fn;
  }
  PRF r;
  if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  const double p = r.precision.value_or(0.0);
  r.f1 = p + r.recall > 0.0 ? 2.0 * p * r.recall / (p + r.recall) : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Bootstrap

BootstrapPlan bootstrap_plan(const std::vector<bool>& labels, std::size_t n_resamples, std::uint64_t seed) {
  const std::size_t n = labels.size();
  require(n > 0, Errc::domain, "bootstrap needs at least one tile");
  require(std::find(labels.begin(), labels.end(), true) != labels.end(), Errc::undefined_metric,
          "bootstrap needs at least one positive tile");
  Rng rng = make_rng(seed, "bootstrap");
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  BootstrapPlan plan;
  plan.resamples.reserve(n_resamples);
  const std::size_t budget = 10 * n_resamples;
  std::size_t attempts = 0;
  while (plan.resamples.size() < n_resamples) {
    require(attempts < budget, Errc::degenerate, "bootstrap redraw budget exhausted");
    ++attempts;
    std::vector<std::size_t> idx(n);
    bool any_positive = false;
    for (auto& i : idx) {
      i = pick(rng);
      any_positive = any_positive || labels[i];
    }
    if (!any_positive) {
      ++plan.redraws;
      continue;
    }
    plan.resamples.push_back(std::move(idx));
  }
  return plan;
}

Interval summarize(std::span<const double> samples) {
  std::vector<double> defined;
  for (double s : samples)
    if (!std::isnan(s)) defined.push_back(s);
  require(!defined.empty(), Errc::undefined_metric, "metric undefined on every resample");
  return {percentile(defined, 50.0), percentile(defined, 2.5), percentile(defined, 97.5)};
}

BootstrapResult bootstrap_ci(const LabeledScores& data, const Metric& metric, const BootstrapPlan& plan,
                             std::size_t threads) {
  data.validate();
  BootstrapResult r;
  r.redraws = plan.redraws;
  r.samples.assign(plan.resamples.size(), kNaN);
  parallel_for(plan.resamples.size(), threads,
               [&](std::size_t i) { r.samples[i] = metric(data.resample(plan.resamples[i])); });
  r.undefined = static_cast<std::size_t>(std::count_if(r.samples.begin(), r.samples.end(), [](double v) { return std::isnan(v); }));
  r.ci = summarize(r.samples);
  return r;
}

BootstrapResult bootstrap_ci(const LabeledScores& data, const Metric& metric, std::size_t n_resamples,
                             std::uint64_t seed, std::size_t threads) {
  return bootstrap_ci(data, metric, bootstrap_plan(data.labels, n_resamples, seed), threads);
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// P(T <= t) under the null for doubled ranks r2, by counting sign patterns.
double exact_lower_tail(const std::vector<long>& r2, long t2) {
  long total = 0;
  for (long r : r2) total += r;
  std::vector<double> count(static_cast<std::size_t>(total) + 1, 0.0);
  count[0] = 1.0;
  long reach = 0;
  for (long r : r2) {
    for (long s = reach; s >= 0; --s) count[static_cast<std::size_t>(s + r)] += count[static_cast<std::size_t>(s)];
    reach += r;
  }
  double below = 0.0;
  for (long s = 0; s <= std::min(t2, total); ++s) below += count[static_cast<std::size_t>(s)];
  return below / std::ldexp(1.0, static_cast<int>(r2.size()));
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b, Alternative alt,
                                    WilcoxonMethod method) {
  require(a.size() == b.size(), Errc::shape, "Wilcoxon samples differ in length");
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    require(!std::isnan(diff), Errc::domain, "NaN in Wilcoxon sample");
    if (diff != 0.0) d.push_back(diff);
  }
  require(!d.empty(), Errc::no_signal, "all paired differences are zero");
  require(d.size() >= 5, Errc::domain, "Wilcoxon needs at least 5 non-zero differences");
  const std::size_t n = d.size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return std::abs(d[x]) < std::abs(d[y]); });
  // Doubled average ranks stay integral.
  std::vector<long> r2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const long doubled = static_cast<long>(i + j + 2);
    for (std::size_t k = i; k <= j; ++k) r2[order[k]] = doubled;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  long wp2 = 0, wm2 = 0;
  for (std::size_t i = 0; i < n; ++i) (d[i] > 0 ? wp2 : wm2) += r2[i];

  WilcoxonResult res;
  res.n = n;
  res.w_plus = static_cast<double>(wp2) / 2.0;
  res.w_minus = static_cast<double>(wm2) / 2.0;
  res.w = std::min(res.w_plus, res.w_minus);
  res.exact = method == WilcoxonMethod::exact || (method == WilcoxonMethod::automatic && n <= 25);
  if (res.exact)
    require(n <= 60, Errc::domain, "exact Wilcoxon path limited to n <= 60");

  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double sd = std::sqrt(nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0);
  auto lower_tail = [&](long t2) {
    if (res.exact) return exact_lower_tail(r2, t2);
    return normal_cdf((static_cast<double>(t2) / 2.0 - mean + 0.5) / sd);
  };

  switch (alt) {
    case Alternative::two_sided: res.p_value = std::min(1.0, 2.0 * lower_tail(std::min(wp2, wm2))); break;
    case Alternative::greater: res.p_value = lower_tail(wm2); break;
    case Alternative::less: res.p_value = lower_tail(wp2); break;
  }
  return res;
}

double cohens_d_paired(std::span<const double> diffs) {
  require(diffs.size() >= 2, Errc::domain, "Cohen's d needs at least two differences");
  const double n = static_cast<double>(diffs.size());
  const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : diffs) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  require(sd > 0.0, Errc::degenerate, "zero spread in paired differences");
  return mean / sd;
}

double relative_improvement(double a, double b) {
  require(b != 0.0, Errc::domain, "relative improvement against zero");
  return (a - b) / b;
}

// ---------------------------------------------------------------------------
// Method comparison

namespace {

Flagged flagged_call(const std::function<double()>& fn) {
  try {
    return {fn(), {}};
  } catch (const Error& e) {
    switch (e.code()) {
      case Errc::no_signal: return {std::nullopt, "no-signal"};
      case Errc::degenerate: return {std::nullopt, "degenerate-effect"};
      default: return {std::nullopt, std::string(to_string(e.code()))};
    }
  }
}

std::vector<double> paired_diffs(const std::vector<double>& x, const std::vector<double>& y) {
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isnan(x[i]) && !std::isnan(y[i])) d.push_back(x[i] - y[i]);
  return d;
}

struct MethodSamples {
  std::vector<double> auprc, precision, recall, f1;
};

}  // namespace

EvalReport compare_methods(const std::map<Method, LabeledScores>& per_method, Method reference,
                           const CompareOptions& opt, std::string site, ConfigTag config_tag) {
  require(per_method.contains(reference), Errc::usage, "reference method has no scores");
  const LabeledScores& ref = per_method.at(reference);
  for (const auto& [m, ls] : per_method) {
    ls.validate();
    require(ls.labels == ref.labels, Errc::pairing, "methods are not evaluated on the same tiles");
  }

  EvalReport report;
  report.site = std::move(site);
  report.config_tag = config_tag;
  report.reference = reference;
  report.n_boot = opt.n_boot;
  report.seed = opt.seed;
  const BootstrapPlan plan = bootstrap_plan(ref.labels, opt.n_boot, opt.seed);
  report.redraws = plan.redraws;

  std::map<Method, MethodSamples> samples;
  for (const auto& [m, ls] : per_method) {
    MethodSamples& s = samples[m];
    s.auprc = bootstrap_ci(ls, [](const LabeledScores& d) { return auprc(d); }, plan, opt.threads).samples;
    if (auto it = opt.thresholds.find(m); it != opt.thresholds.end()) {
      const double tau = it->second;
      s.precision = bootstrap_ci(ls, [tau](const LabeledScores& d) { return prf_at_threshold(d, tau).precision.value_or(kNaN); },
                                 plan, opt.threads).samples;
      s.recall = bootstrap_ci(ls, [tau](const LabeledScores& d) { return prf_at_threshold(d, tau).recall; }, plan, opt.threads).samples;
      s.f1 = bootstrap_ci(ls, [tau](const LabeledScores& d) { return prf_at_threshold(d, tau).f1; }, plan, opt.threads).samples;
    }
  }

  const MethodSamples& rs = samples.at(reference);
  const double ref_median = summarize(rs.auprc).median;
  for (const auto& [m, ls] : per_method) {
    const MethodSamples& s = samples.at(m);
    MethodReport row;
    row.method = m;
    row.auprc_point = auprc(ls);
    row.auprc = summarize(s.auprc);
    if (!s.precision.empty()) {
      row.threshold = opt.thresholds.at(m);
      try {
        row.precision = summarize(s.precision);
      } catch (const Error&) {
        row.precision.reset();
      }
      row.recall = summarize(s.recall);
      row.f1 = summarize(s.f1);
    }
    row.p_vs_reference =
        flagged_call([&] { return wilcoxon_signed_rank(s.auprc, rs.auprc, opt.alternative).p_value; });
    if (opt.effect_mode == EffectMode::per_resample) {
      row.cohens_d["auprc"] = flagged_call([&] { return cohens_d_paired(paired_diffs(s.auprc, rs.auprc)); });
      if (!s.precision.empty() && !rs.precision.empty()) {
        row.cohens_d["precision"] = flagged_call([&] { return cohens_d_paired(paired_diffs(s.precision, rs.precision)); });
        row.cohens_d["recall"] = flagged_call([&] { return cohens_d_paired(paired_diffs(s.recall, rs.recall)); });
        row.cohens_d["f1"] = flagged_call([&] { return cohens_d_paired(paired_diffs(s.f1, rs.f1)); });
      }
    } else {
      row.cohens_d["tile_score"] = flagged_call([&] { return cohens_d_paired(paired_diffs(ls.scores, ref.scores)); });
    }
    row.rel_improvement = flagged_call([&] { return relative_improvement(row.auprc.median, ref_median); });
    report.rows.push_back(std::move(row));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

using nlohmann::json;

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json interval_json(const Interval& i) { return {{"median", i.median}, {"ci_lo", i.lo}, {"ci_hi", i.hi}}; }

json opt_interval_json(const std::optional<Interval>& i) { return i ? interval_json(*i) : json(nullptr); }

json flagged_json(const Flagged& f) {
  json j = {{"value", opt_json(f.value)}};
  if (!f.note.empty()) j["flag"] = f.note;
  return j;
}

Interval interval_from(const json& j) { return {j.at("median"), j.at("ci_lo"), j.at("ci_hi")}; }

std::optional<Interval> opt_interval_from(const json& j) {
  if (j.is_null()) return std::nullopt;
  return interval_from(j);
}

Flagged flagged_from(const json& j) {
  Flagged f;
  if (!j.at("value").is_null()) f.value = j.at("value").get<double>();
  if (j.contains("flag")) f.note = j.at("flag").get<std::string>();
  return f;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(6) << std::fixed << v;
  return os.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

}  // namespace

void save_reports_json(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  json arr = json::array();
  for (const auto& r : reports) {
    json rows = json::array();
    for (const auto& row : r.rows) {
      json d = json::object();
      for (const auto& [k, f] : row.cohens_d) d[k] = flagged_json(f);
      rows.push_back({{"method", std::string(to_string(row.method))},
                      {"auprc_point", row.auprc_point},
                      {"auprc", interval_json(row.auprc)},
                      {"threshold", opt_json(row.threshold)},
                      {"precision", opt_interval_json(row.precision)},
                      {"recall", opt_interval_json(row.recall)},
                      {"f1", opt_interval_json(row.f1)},
                      {"p_vs_reference", flagged_json(row.p_vs_reference)},
                      {"cohens_d", d},
                      {"rel_improvement", flagged_json(row.rel_improvement)}});
    }
    arr.push_back({{"site", r.site},
                   {"config_tag", std::string(to_string(r.config_tag))},
                   {"reference", std::string(to_string(r.reference))},
                   {"n_boot", r.n_boot},
                   {"seed", r.seed},
                   {"redraws", r.redraws},
                   {"rows", rows}});
  }
  std::ofstream os(path);
  require(static_cast<bool>(os), Errc::io, "cannot write " + path.string());
  os << arr.dump(2) << '\n';
}

std::vector<EvalReport> load_reports_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), Errc::io, "cannot read " + path.string());
  json arr;
  try {
    arr = json::parse(is);
  } catch (const json::exception& e) {
    fail(Errc::format, "malformed report " + path.string() + ": " + e.what());
  }
  std::vector<EvalReport> out;
  try {
    for (const auto& j : arr) {
      EvalReport r;
      r.site = j.at("site");
      r.config_tag = parse_config_tag(j.at("config_tag").get<std::string>());
      r.reference = parse_method(j.at("reference").get<std::string>());
      r.n_boot = j.at("n_boot");
      r.seed = j.at("seed");
      r.redraws = j.at("redraws");
      for (const auto& jr : j.at("rows")) {
        MethodReport row;
        row.method = parse_method(jr.at("method").get<std::string>());
        row.auprc_point = jr.at("auprc_point");
        row.auprc = interval_from(jr.at("auprc"));
        if (!jr.at("threshold").is_null()) row.threshold = jr.at("threshold").get<double>();
        row.precision = opt_interval_from(jr.at("precision"));
        row.recall = opt_interval_from(jr.at("recall"));
        row.f1 = opt_interval_from(jr.at("f1"));
        row.p_vs_reference = flagged_from(jr.at("p_vs_reference"));
        for (const auto& [k, v] : jr.at("cohens_d").items()) row.cohens_d[k] = flagged_from(v);
        row.rel_improvement = flagged_from(jr.at("rel_improvement"));
        r.rows.push_back(std::move(row));
      }
      out.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    fail(Errc::format, "malformed report " + path.string() + ": " + e.what());
  }
  return out;
}

void save_reports_csv(const std::vector<EvalReport>& reports, const std::filesystem::path& path) {
  std::ofstream os(path);
  require(static_cast<bool>(os), Errc::io, "cannot write " + path.string());
  os << "site,config_tag,method,auprc,auprc_lo,auprc_hi,precision,recall,f1,p_vs_reference,cohens_d_auprc,"
        "rel_improvement\n";
  for (const auto& r : reports)
    for (const auto& row : r.rows) {
      auto med = [](const std::optional<Interval>& i) { return i ? std::optional<double>(i->median) : std::nullopt; };
      const auto d = row.cohens_d.find("auprc");
      os << r.site << ',' << to_string(r.config_tag) << ',' << to_string(row.method) << ',' << fmt(row.auprc.median)
         << ',' << fmt(row.auprc.lo) << ',' << fmt(row.auprc.hi) << ',' << fmt(med(row.precision)) << ','
         << fmt(med(row.recall)) << ',' << fmt(med(row.f1)) << ',' << fmt(row.p_vs_reference.value) << ','
         << fmt(d == row.cohens_d.end() ? std::nullopt : d->second.value) << ',' << fmt(row.rel_improvement.value)
         << '\n';
    }
}

}  // namespace lrc
