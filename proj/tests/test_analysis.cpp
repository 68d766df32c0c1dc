#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "emid/analysis/correlation.hpp"
#include "emid/analysis/report.hpp"
#include "emid/synthgen/shift.hpp"

using namespace emid;
using namespace emid::analysis;
using Catch::Approx;

namespace {

PairedSeries series(std::vector<double> a, std::vector<double> b) {
  PairedSeries s;
  s.name = "t";
  s.a = std::move(a);
  s.b = std::move(b);
  return s;
}

}  // namespace

TEST_CASE("spearman worked examples", "[analysis]") {
  auto r = spearman(series({1, 2, 3, 4, 5}, {1, 3, 2, 5, 4}));
  CHECK(r.statistic == Approx(0.8).margin(1e-15));
  CHECK(r.exact);
  CHECK(r.permutations == 120);
  // 8 orderings reach rho >= 0.8 and 8 reach rho <= -0.8
  CHECK(r.p_value == Approx(16.0 / 120.0).margin(1e-15));

  r = spearman(series({1, 2, 3, 4, 5}, {1, 2, 3, 4, 5}));
  CHECK(r.statistic == 1.0);
  CHECK(r.p_value == Approx(2.0 / 120.0).margin(1e-15));
  CHECK(spearman(series({1, 2, 3, 4, 5}, {5, 4, 3, 2, 1})).statistic == -1.0);

  CHECK(midranks({10, 20, 20, 5}) == std::vector<double>{2, 3.5, 3.5, 1});
  CHECK_THROWS_AS(spearman(series({1, 1, 1}, {1, 2, 3})), UndefinedStatistic);
  CHECK_THROWS_AS(spearman(series({1, 2}, {1, 2})), ContractError);
}

TEST_CASE("kendall worked examples", "[analysis]") {
  auto r = kendall(series({1, 2, 3}, {2, 1, 3}));
  CHECK(r.statistic == Approx(1.0 / 3.0).margin(1e-15));
  CHECK(r.p_value == 1.0);
  CHECK(kendall(series({1, 2, 3, 4}, {1, 2, 3, 4})).statistic == 1.0);
  CHECK_THROWS_AS(kendall(series({1, 2, 3}, {4, 4, 4})), UndefinedStatistic);

  // ties: tau-b against a hand count
  // a = 1 2 2 3, b = 1 3 2 3: C = 4, D = 0, ties only in a = 1, only in b = 1
  CHECK(kendall_tau_b({1, 2, 2, 3}, {1, 3, 2, 3}) == Approx(4.0 / 5.0).margin(1e-15));

  const auto seven = kendall(series({0, 1, 2, 3, 4, 5, 6}, {0, 1, 2, 3, 4, 5, 6}));
  CHECK(seven.p_value == Approx(2.0 / 5040.0).margin(1e-15));
}

TEST_CASE("pearson worked examples", "[analysis]") {
  std::vector<double> a{0.3, -1.2, 2.5, 0.9, 4.1};
  std::vector<double> b(a.size()), c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) b[i] = 2.0 * a[i] + 3.0, c[i] = -a[i];
  CHECK(pearson(series(a, b)).statistic == Approx(1.0).margin(1e-12));
  CHECK(pearson(series(a, c)).statistic == Approx(-1.0).margin(1e-12));
  // two-pass: means 1 and 5/3, S_ab = 4, S_aa = 2, S_bb = 26/3
  CHECK(pearson_r({0, 1, 2}, {0, 1, 4}) == Approx(4.0 / std::sqrt(2.0 * 26.0 / 3.0)).margin(1e-15));
  CHECK(pearson_r({0, 1, 2}, {0, 1, 4}) == Approx(0.9607689228305227).margin(1e-15));
  CHECK_THROWS_AS(pearson(series({1, 2, 3}, {2, 2, 2})), UndefinedStatistic);
}

TEST_CASE("invariance under monotone and affine maps", "[analysis]") {
  numkit::Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 5 + rng.index(20);
    std::vector<double> a(n), b(n), fa(n), fb(n), ga(n), gb(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.normal();
      b[i] = a[i] + rng.normal();
      fa[i] = std::exp(a[i]);
      fb[i] = b[i] * b[i] * b[i] + b[i];
      ga[i] = 3.0 * a[i] - 1.0;
      gb[i] = 0.5 * b[i] + 7.0;
    }
    CHECK(spearman_rho(fa, fb) == Approx(spearman_rho(a, b)).margin(1e-12));
    CHECK(kendall_tau_b(fa, fb) == Approx(kendall_tau_b(a, b)).margin(1e-12));
    CHECK(pearson_r(ga, gb) == Approx(pearson_r(a, b)).margin(1e-12));
  }
}

TEST_CASE("permutation p-values", "[analysis]") {
  const auto s = series({1, 2, 3, 4, 5, 6, 7}, {2, 1, 4, 3, 7, 5, 6});
  const auto exact = spearman(s);
  REQUIRE(exact.exact);
  PermutationOptions mc;
  mc.exact_max_n = 0;
  mc.seed = 11;
  const auto sampled = spearman(s, mc);
  CHECK_FALSE(sampled.exact);
  CHECK(sampled.permutations == 10000);
  const double sd = std::sqrt(exact.p_value * (1.0 - exact.p_value) / 10000.0);
  CHECK(std::abs(sampled.p_value - exact.p_value) <= 3.0 * sd + 1e-4);
  CHECK(spearman(s, mc).p_value == sampled.p_value);
  for (auto m : {CorrMethod::kendall, CorrMethod::pearson}) {
    const auto e = correlate(m, s), r = correlate(m, s, mc);
    CHECK(std::abs(r.p_value - e.p_value) <= 3.0 * std::sqrt(e.p_value * (1.0 - e.p_value) / 10000.0) + 1e-4);
  }
}

TEST_CASE("least squares line", "[analysis]") {
  auto l = fit_line(series({0, 1, 2, 3}, {1, 3, 5, 7}));
  CHECK(l.slope == Approx(2.0).margin(1e-15));
  CHECK(l.intercept == Approx(1.0).margin(1e-15));
  l = fit_line(series({-1, 0, 1}, {1, 0, 1}));
  CHECK(l.slope == Approx(0.0).margin(1e-15));
  CHECK_THROWS_AS(fit_line(series({2, 2, 2}, {1, 2, 3})), UndefinedStatistic);

  numkit::Rng rng(5);
  const std::size_t n = 40;
  std::vector<double> a(n), b(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = rng.uniform(-3, 3), b[i] = 0.7 * a[i] + rng.normal();
  l = fit_line(series(a, b));
  // normal equations [n sa; sa saa] [c; m] = [sb; sab]
  double sa = 0, sb = 0, saa = 0, sab = 0;
  for (std::size_t i = 0; i < n; ++i) sa += a[i], sb += b[i], saa += a[i] * a[i], sab += a[i] * b[i];
  const double det = n * saa - sa * sa;
  CHECK(l.slope == Approx((n * sab - sa * sb) / det).margin(1e-10));
  CHECK(l.intercept == Approx((saa * sb - sa * sab) / det).margin(1e-10));
  double orth = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) orth += (b[i] - l.slope * a[i] - l.intercept) * a[i], scale = std::max(scale, std::abs(a[i] * b[i]));
  CHECK(std::abs(orth) <= 1e-9 * n * scale);
}

TEST_CASE("sweep table and reports", "[analysis]") {
  numkit::Rng rng(9);
  const auto w = synthgen::SceneWorld::random(4, 4, 3, 2, rng);
  std::vector<double> logits(4 * 4 * 3);
  for (std::size_t x = 0; x < 16; ++x)
    for (std::size_t y = 0; y < 3; ++y) logits[x * 3 + y] = std::log(w.response[x * 3 + y]) + 0.5 * rng.normal();
  const auto m = discrete::ConditionalModel::from_logits(4, 4, 3, logits);

  std::vector<BoundReport> reports;
  for (const auto& sc : synthgen::severity_ladder(w, synthgen::ShiftKind::joint, 4, 21))
    reports.push_back(evaluate_scenario(sc, m, {}, "joint-21"));
  const auto table = sweep_table(reports);
  REQUIRE(table.size() == 6);
  for (const auto& s : table) CHECK(s.size() == 4);
  CHECK(table[1].labels[2] == reports[2].id);
  for (const auto& r : reports) {
    CHECK(r.all_hold());
    CHECK(r.theorem2->consistency == metrics::Consistency::full);
  }
  // partial bound along the ladder
  for (std::size_t i = 1; i < reports.size(); ++i) CHECK(*reports[i].partial >= *reports[i - 1].partial);

  // visual ladder: theorem 2 only in the opt-in mode
  const auto vis = synthgen::severity_ladder(w, synthgen::ShiftKind::visual, 3, 4);
  CHECK_FALSE(evaluate_scenario(vis[0], m).theorem2);
  EvaluateOptions relaxed;
  relaxed.allow_single_modality = true;
  CHECK(evaluate_scenario(vis[0], m, relaxed).theorem2->consistency == metrics::Consistency::single_modality);

  // duplicating every report leaves the statistics unchanged
  auto doubled = reports;
  doubled.insert(doubled.end(), reports.begin(), reports.end());
  const auto t2 = sweep_table(doubled);
  for (std::size_t k = 0; k < table.size(); ++k) {
    CHECK(t2[k].size() == 8);
    CHECK(pearson_r(t2[k].a, t2[k].b) == Approx(pearson_r(table[k].a, table[k].b)).margin(1e-12));
    CHECK(spearman_rho(t2[k].a, t2[k].b) == Approx(spearman_rho(table[k].a, table[k].b)).margin(1e-12));
    CHECK(kendall_tau_b(t2[k].a, t2[k].b) == Approx(kendall_tau_b(table[k].a, table[k].b)).margin(1e-12));
  }

  CHECK_THROWS_AS(sweep_table({reports[0], reports[1]}), ContractError);

  const auto back = bound_report_from_json(nlohmann::json::parse(to_json(reports[2]).dump()));
  CHECK(to_json(back) == to_json(reports[2]));

  std::ostringstream a, b;
  write_scenarios_csv(a, reports);
  write_scenarios_csv(b, reports);
  CHECK(a.str() == b.str());
  CHECK(a.str().rfind("id,kind,ladder,", 0) == 0);

  std::ostringstream c;
  write_correlations_csv(c, correlate_all(table, {}));
  CHECK(c.str().find("emid_vs_theorem2_rhs,pearson,") != std::string::npos);
}
