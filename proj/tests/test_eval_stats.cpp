// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "errc.hpp"
#include "helpers.hpp"
#include "lrc/eval_stats.hpp"
#include "oracles.hpp"

using namespace lrc;

namespace {

LabeledScores make(std::vector<double> scores, std::vector<bool> labels) {
  LabeledScores d;
  d.scores = std::move(scores);
  d.labels = std::move(labels);
  return d;
}

/// Seeded scores; odd seeds are quantized to three levels so ties occur.
std::vector<double> score_vector(std::size_t n, std::uint64_t seed) {
  auto v = test::random_vector(n, seed);
  if (seed % 2 == 1)
    for (double& x : v) x = std::floor(x * 3) / 3;
  return v;
}

LabeledScores synthetic(std::size_t n, std::size_t positives, double separation, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> nd(0, 1);
  LabeledScores d;
  for (std::size_t i = 0; i < n; ++i) {
    const bool pos = i < positives;
    d.labels.push_back(pos);
    d.scores.push_back(nd(rng) + (pos ? separation : 0.0));
  }
  return d;
}

}  // namespace

TEST_CASE("precision-recall curve") {
  const auto c = pr_curve(make({0.9, 0.8, 0.1}, {true, false, true}));
  REQUIRE(c.points.size() == 3);
  CHECK(c.points[0].threshold == 0.9);
  CHECK(c.points[0].precision == 1.0);
  CHECK(c.points[0].recall == 0.5);
  CHECK(c.points[1].precision == 0.5);
  CHECK(c.points[1].recall == 0.5);
  CHECK(c.points[2].precision == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(c.points[2].recall == 1.0);
  CHECK(auprc(c) == doctest::Approx(0.5 + 0.5 * 2.0 / 3.0).epsilon(1e-15));

  const auto perfect = pr_curve(make({5, 4, 3, 2, 1}, {true, true, false, false, false}));
  for (const auto& p : perfect.points)
    if (p.recall < 1.0) CHECK(p.precision == 1.0);
  CHECK(auprc(perfect) == 1.0);

  const auto tied = pr_curve(make({0.3, 0.3, 0.3, 0.3}, {false, true, false, false}));
  REQUIRE(tied.points.size() == 1);
  CHECK(tied.points[0].precision == 0.25);
  CHECK(tied.points[0].recall == 1.0);
  CHECK(auprc(tied) == 0.25);

  CHECK_ERRC(pr_curve(make({0.1, 0.2}, {false, false})), Errc::undefined_metric);
}

TEST_CASE("average precision matches brute-force enumeration") {
  for (std::size_t n = 1; n <= 8; ++n)
    for (std::uint32_t pattern = 1; pattern < (1U << n); ++pattern) {
      std::vector<bool> labels(n);
      for (std::size_t i = 0; i < n; ++i) labels[i] = (pattern >> i & 1U) != 0;
      for (std::uint64_t s = 0; s < 50; ++s) {
        const auto scores = score_vector(n, s * 977 + pattern);
        const double ap = auprc(make(scores, labels));
        CHECK(ap == oracle::average_precision(scores, labels));
      }
    }
}

TEST_CASE("average precision properties") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    LabeledScores d = synthetic(40, 1 + s % 10, 0.5 * static_cast<double>(s % 4), s);
    const double ap = auprc(d);
    CHECK(ap >= 0.0);
    CHECK(ap <= 1.0);

    LabeledScores t = d;
    for (double& x : t.scores) x = std::exp(3 * x) + 2;
    const auto a = pr_curve(d), b = pr_curve(t);
    REQUIRE(a.points.size() == b.points.size());
    for (std::size_t i = 0; i < a.points.size(); ++i) {
      CHECK(a.points[i].precision == b.points[i].precision);
      CHECK(a.points[i].recall == b.points[i].recall);
    }
    CHECK(auprc(t) == ap);

    LabeledScores c = d;
    std::fill(c.scores.begin(), c.scores.end(), 0.7);
    CHECK(auprc(c) == static_cast<double>(c.positives()) / static_cast<double>(c.size()));
  }
}

TEST_CASE("precision, recall and F1 at a threshold") {
  const auto d = make({0.9, 0.8, 0.1}, {true, false, true});
  const PRF r = prf_at_threshold(d, 0.5);
  CHECK(*r.precision == 0.5);
  CHECK(r.recall == 0.5);
  CHECK(r.f1 == 0.5);

  const PRF none = prf_at_threshold(d, 1.0);
  CHECK_FALSE(none.precision.has_value());
  CHECK(none.recall == 0.0);
  CHECK(none.f1 == 0.0);

  const PRF perfect = prf_at_threshold(make({0.9, 0.8, 0.2, 0.1}, {true, true, false, false}), 0.5);
  CHECK(*perfect.precision == 1.0);
  CHECK(perfect.recall == 1.0);
  CHECK(perfect.f1 == 1.0);

  const PRF wrong = prf_at_threshold(make({0.9, 0.1}, {false, true}), 0.5);
  CHECK(*wrong.precision == 0.0);
  CHECK(wrong.f1 == 0.0);
}

TEST_CASE("bootstrap") {
  const LabeledScores d = synthetic(200, 20, 1.0, 3);
  const Metric ap = [](const LabeledScores& x) { return auprc(x); };
  const BootstrapResult a = bootstrap_ci(d, ap, 1000, 42);
  const BootstrapResult b = bootstrap_ci(d, ap, 1000, 42, 4);
  CHECK(a.samples == b.samples);
  CHECK(std::memcmp(&a.ci, &b.ci, sizeof(Interval)) == 0);
  CHECK(a.ci.lo <= a.ci.median);
  CHECK(a.ci.median <= a.ci.hi);
  const double point = auprc(d);
  CHECK(a.ci.lo <= point);
  CHECK(point <= a.ci.hi);
  CHECK(a.ci.hi - a.ci.lo > 0.0);
  CHECK(a.ci.hi - a.ci.lo < 1.0);

  const BootstrapResult c = bootstrap_ci(d, [](const LabeledScores&) { return 0.37; }, 200, 1);
  CHECK(c.ci.lo == 0.37);
  CHECK(c.ci.median == 0.37);
  CHECK(c.ci.hi == 0.37);

  SUBCASE("rare positives force redraws") {
    LabeledScores rare = synthetic(60, 1, 1.0, 5);
    const BootstrapResult r = bootstrap_ci(rare, ap, 300, 9);
    CHECK(r.redraws > 0);
    CHECK(r.samples.size() == 300);
  }
  SUBCASE("no positives at all") {
    std::vector<bool> labels(10, false);
    CHECK_ERRC(bootstrap_plan(labels, 10, 1), Errc::undefined_metric);
  }
  SUBCASE("undefined resamples are skipped") {
    const Metric prec = [](const LabeledScores& x) {
      const auto p = prf_at_threshold(x, 1e9).precision;
      return p ? *p : std::nan("");
    };
    CHECK_ERRC(bootstrap_ci(d, prec, 50, 2), Errc::undefined_metric);
    const Metric some = [](const LabeledScores& x) {
      const auto p = prf_at_threshold(x, 2.6).precision;
      return p ? *p : std::nan("");
    };
    const BootstrapResult u = bootstrap_ci(d, some, 200, 2);
    CHECK(u.undefined > 0);
    CHECK(u.undefined < 200);
  }
}

TEST_CASE("percentile summary is ordered for arbitrary samples") {
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto v = test::random_vector(1 + s % 37, s, -5, 5);
    const Interval i = summarize(v);
    CHECK(i.lo <= i.median);
    CHECK(i.median <= i.hi);
  }
}

TEST_CASE("Wilcoxon signed-rank") {
  SUBCASE("five positive differences") {
    const std::vector<double> a{1.1, 2.2, 3.3, 4.4, 5.5}, b{1, 2, 3, 4, 5};
    const auto two = wilcoxon_signed_rank(a, b);
    CHECK(two.w == 0.0);
    CHECK(two.exact);
    CHECK(two.p_value == 0.0625);
    CHECK(wilcoxon_signed_rank(a, b, Alternative::greater).p_value == 0.03125);
    CHECK(wilcoxon_signed_rank(a, b, Alternative::less).p_value == 1.0);
  }
  SUBCASE("exact path against sign enumeration") {
    for (std::size_t n = 5; n <= 10; ++n)
      for (std::uint64_t s = 0; s < 20; ++s) {
        auto a = test::random_vector(n, s * 31 + n, -1, 1);
        auto b = test::random_vector(n, s * 37 + n + 1000, -1, 1);
        if (s % 3 == 0)  // ties in |d|
          for (std::size_t i = 0; i < n; ++i) a[i] = b[i] + std::round((a[i] - b[i]) * 4) / 4 + (i % 2 ? 0.25 : -0.25);
        std::size_t nonzero = 0;
        for (std::size_t i = 0; i < n; ++i) nonzero += a[i] != b[i] ? 1 : 0;
        if (nonzero < 5) continue;
        const auto ref = oracle::signed_rank_enumeration(a, b);
        const auto e = wilcoxon_signed_rank(a, b, Alternative::two_sided, WilcoxonMethod::exact);
        CHECK(e.w_plus == doctest::Approx(ref.w_plus).epsilon(1e-12));
        CHECK(e.w_minus == doctest::Approx(ref.w_minus).epsilon(1e-12));
        CHECK(e.p_value == doctest::Approx(ref.p_two_sided).epsilon(1e-12));
        CHECK(wilcoxon_signed_rank(a, b, Alternative::greater, WilcoxonMethod::exact).p_value ==
              doctest::Approx(ref.p_greater).epsilon(1e-12));
        CHECK(wilcoxon_signed_rank(a, b, Alternative::less, WilcoxonMethod::exact).p_value ==
              doctest::Approx(ref.p_less).epsilon(1e-12));
      }
  }
  SUBCASE("normal approximation formula") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      auto a = test::random_vector(30, s, 0.0, 1.0);
      const auto b = test::random_vector(30, s + 500, -0.2, 0.8);
      if (s % 2)
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = b[i] + std::round((a[i] - b[i]) * 5) / 5 + 0.1;
      const double pn = wilcoxon_signed_rank(a, b, Alternative::two_sided, WilcoxonMethod::normal).p_value;
      CHECK(pn == doctest::Approx(oracle::signed_rank_normal_p(a, b)).epsilon(1e-12));
      CHECK_FALSE(wilcoxon_signed_rank(a, b).exact);
    }
  }
  SUBCASE("normal approximation near the exact value at n = 25") {
    // A continuity-corrected normal approximation is typically 1e-3 to 6e-3
    // away from the exact tail at n = 25; this bounds that gap.
    for (std::uint64_t s = 0; s < 10; ++s) {
      const auto a = test::random_vector(25, s, 0.0, 1.0);
      auto b = test::random_vector(25, s + 500, -0.2, 0.8);
      const double pe = wilcoxon_signed_rank(a, b, Alternative::two_sided, WilcoxonMethod::exact).p_value;
      const double pn = wilcoxon_signed_rank(a, b, Alternative::two_sided, WilcoxonMethod::normal).p_value;
      CAPTURE(pe);
      CHECK(std::abs(pe - pn) < 1e-2);
    }
  }
  SUBCASE("errors") {
    const std::vector<double> a{1, 2, 3, 4, 5, 6};
    CHECK_ERRC(wilcoxon_signed_rank(a, a), Errc::no_signal);
    const std::vector<double> b{1, 2, 3, 4, 5.5, 6.5};
    CHECK_ERRC(wilcoxon_signed_rank(a, b), Errc::domain);
  }
}

TEST_CASE("effect sizes") {
  CHECK(cohens_d_paired(std::vector<double>{1, 2, 3}) == 2.0);
  CHECK(cohens_d_paired(std::vector<double>{-1, -2, -3}) == -2.0);
  CHECK_ERRC(cohens_d_paired(std::vector<double>{0.5, 0.5, 0.5}), Errc::degenerate);
  CHECK_ERRC(cohens_d_paired(std::vector<double>{0.5}), Errc::domain);

  CHECK(std::lround(100 * relative_improvement(0.74, 0.65)) == 14);
  CHECK(relative_improvement(0.74, 0.65) == doctest::Approx(0.09 / 0.65).epsilon(1e-15));
  CHECK(std::lround(100 * relative_improvement(0.68, 0.50)) == 36);
  CHECK(relative_improvement(0.3, 0.3) == 0.0);
  CHECK_ERRC(relative_improvement(0.3, 0.0), Errc::domain);
}

TEST_CASE("method comparison") {
  const LabeledScores good = synthetic(150, 15, 2.0, 1);
  LabeledScores weak = good;
  weak.scores = synthetic(150, 15, 0.5, 2).scores;
  std::map<Method, LabeledScores> per{{Method::lrc, good}, {Method::cva, weak}, {Method::irmad, weak}};
  CompareOptions opts;
  opts.n_boot = 200;
  opts.seed = 11;
  opts.thresholds = {{Method::lrc, 1.0}, {Method::cva, 1.0}, {Method::irmad, 1.0}};

  const EvalReport r = compare_methods(per, Method::irmad, opts, "synthetic");
  REQUIRE(r.rows.size() == 3);
  for (const auto& row : r.rows) {
    CHECK(row.auprc.lo <= row.auprc.median);
    CHECK(row.auprc.median <= row.auprc.hi);
    CHECK(row.precision.has_value());
    CHECK(row.f1.has_value());
  }
  const auto& ref = *std::find_if(r.rows.begin(), r.rows.end(), [](const auto& x) { return x.method == Method::irmad; });
  CHECK(ref.p_vs_reference.note == "no-signal");
  CHECK(ref.cohens_d.at("auprc").note == "degenerate-effect");
  CHECK(*ref.rel_improvement.value == 0.0);
  // CVA carries identical scores to the reference.
  const auto& cva = *std::find_if(r.rows.begin(), r.rows.end(), [](const auto& x) { return x.method == Method::cva; });
  CHECK_FALSE(cva.p_vs_reference.value.has_value());
  CHECK_FALSE(cva.cohens_d.at("auprc").value.has_value());
  const auto& lrc = *std::find_if(r.rows.begin(), r.rows.end(), [](const auto& x) { return x.method == Method::lrc; });
  CHECK(*lrc.p_vs_reference.value < 0.01);
  CHECK(*lrc.rel_improvement.value > 0.0);

  opts.threads = 3;
  const EvalReport again = compare_methods(per, Method::irmad, opts, "synthetic");
  test::TempDir dir("eval");
  save_reports_json({r}, dir.path / "a.json");
  save_reports_json({again}, dir.path / "b.json");
  save_reports_csv({r}, dir.path / "a.csv");
  std::ifstream fa(dir.path / "a.json"), fb(dir.path / "b.json"), fc(dir.path / "a.csv");
  const std::string ja{std::istreambuf_iterator<char>(fa), {}}, jb{std::istreambuf_iterator<char>(fb), {}};
  CHECK(ja == jb);
  std::string header;
  std::getline(fc, header);
  CHECK(header ==
        "site,config_tag,method,auprc,auprc_lo,auprc_hi,precision,recall,f1,p_vs_reference,cohens_d_auprc,"
        "rel_improvement");
  const auto loaded = load_reports_json(dir.path / "a.json");
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].rows.size() == 3);
  CHECK(loaded[0].rows[0].auprc.median == r.rows[0].auprc.median);

  LabeledScores shifted = weak;
  shifted.labels[0] = !shifted.labels[0];
  per[Method::cva] = shifted;
  CHECK_ERRC(compare_methods(per, Method::irmad, opts), Errc::pairing);
}
