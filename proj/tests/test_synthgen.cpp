#include <catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <sstream>

#include "emid/discrete/model.hpp"
#include "emid/estimators/feature_dump.hpp"
#include "emid/metrics/metrics.hpp"
#include "emid/synthgen/bundle.hpp"
#include "emid/synthgen/sampling.hpp"
#include "emid/synthgen/shift.hpp"

using namespace emid;
using namespace emid::synthgen;
using discrete::js;
using Catch::Approx;

namespace {

double expected_row_js(const DiscreteJoint& p, const DiscreteJoint& q) {
  const auto in = p.input_marginal();
  double s = 0.0;
  for (std::size_t x = 0; x < p.nx(); ++x) s += in[x] * js(p.response_row(x), q.response_row(x));
  return s;
}

}  // namespace

TEST_CASE("geometric interpolation endpoints", "[synthgen]") {
  const std::vector<double> p{0.5, 0.3, 0.2, 0.0}, t{0.1, 0.1, 0.4, 0.4};
  CHECK(geometric_interpolate(p, t, 0.0) == p);
  const auto q1 = geometric_interpolate(p, t, 1.0);
  CHECK(q1[0] == Approx(1.0 / 6.0).margin(1e-15));
  CHECK(q1[2] == Approx(4.0 / 6.0).margin(1e-15));
  CHECK(q1[3] == 0.0);
  CHECK_THROWS_AS(geometric_interpolate(p, std::vector<double>{1.0}, 0.5), ContractError);
}

TEST_CASE("scene world structure", "[synthgen]") {
  numkit::Rng rng(5);
  const auto w = SceneWorld::random(5, 4, 3, 2, rng);
  const auto j = w.joint();
  // cross-scene pairs never occur
  for (std::size_t v = 0; v < 5; ++v)
    for (std::size_t t = 0; t < 4; ++t)
      if (v % 2 != t % 2) CHECK(j.input_marginal()[v * 4 + t] == 0.0);
  for (std::size_t x = 0; x < j.nx(); ++x)
    for (double r : j.response_row(x)) CHECK(r > 0.0);

  const auto back = scene_from_joint(j, 2);
  REQUIRE(back);
  CHECK(back->response == w.response);
  for (std::size_t k = 0; k < 2; ++k) CHECK(back->weights[k] == Approx(w.weights[k]).margin(1e-15));
  CHECK_FALSE(scene_from_joint(discrete::random_joint(4, 4, 3, rng), 2));
  CHECK_THROWS_AS(SceneWorld::random(2, 4, 3, 3, rng), ContractError);
}

TEST_CASE("severity zero reproduces the base", "[synthgen]") {
  numkit::Rng rng(8);
  const auto w = SceneWorld::random(4, 4, 4, 2, rng);
  for (auto kind : {ShiftKind::visual, ShiftKind::text, ShiftKind::joint}) {
    const auto sc = make_consistent_pair(w, kind, 0.0, rng);
    CHECK(sc.q == sc.p);
    CHECK(sc.p == w.joint());
  }
  CHECK_THROWS_AS(make_consistent_pair(w, ShiftKind::visual, 1.5, rng), ContractError);
  CHECK_THROWS_AS(make_consistent_pair(w, ShiftKind::conditional, 0.5, rng), ContractError);
  CHECK_THROWS_AS(make_conditional_shift_pair(w, 0.0, rng), ContractError);
  // one visual token per scene leaves nothing to move
  const auto flat = SceneWorld::random(2, 4, 2, 2, rng);
  CHECK_THROWS_AS(make_consistent_pair(flat, ShiftKind::visual, 0.5, rng), ContractError);
}

TEST_CASE("consistent pairs keep their conditionals", "[synthgen]") {
  numkit::Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    const std::size_t nv = 3 + rng.index(4), nt = 3 + rng.index(4), ny = 2 + rng.index(5);
    const std::size_t k = 2 + rng.index(std::min(nv, nt) - 2);
    const auto w = SceneWorld::random(nv, nt, ny, k, rng);
    const double s = rng.uniform(0.05, 1.0);

    const auto vis = make_consistent_pair(w, ShiftKind::visual, s, rng);
    auto r = metrics::consistency_report(vis.p, vis.q);
    CHECK(r.t_given_v <= 1e-12);
    CHECK(r.y_given_x == 0.0);
    CHECK(js(vis.p.text_marginal(), vis.q.text_marginal()) <= 1e-9);
    CHECK(js(vis.p.visual_marginal(), vis.q.visual_marginal()) > 0.0);
    CHECK(vis.consistency == metrics::Consistency::single_modality);

    const auto txt = make_consistent_pair(w, ShiftKind::text, s, rng);
    r = metrics::consistency_report(txt.p, txt.q);
    CHECK(r.v_given_t <= 1e-12);
    CHECK(r.y_given_x == 0.0);
    CHECK(js(txt.p.visual_marginal(), txt.q.visual_marginal()) <= 1e-9);
    CHECK(js(txt.p.text_marginal(), txt.q.text_marginal()) > 0.0);

    const auto jt = make_consistent_pair(w, ShiftKind::joint, s, rng);
    r = metrics::consistency_report(jt.p, jt.q);
    CHECK(r.worst <= 1e-12);
    CHECK(metrics::satisfies(r, metrics::Consistency::full));
    CHECK(js(jt.p.visual_marginal(), jt.q.visual_marginal()) > 0.0);
    CHECK(js(jt.p.text_marginal(), jt.q.text_marginal()) > 0.0);
  }
}

TEST_CASE("severity ladders", "[synthgen]") {
  numkit::Rng rng(30);
  const auto w = SceneWorld::random(5, 5, 4, 2, rng);

  const auto vis = severity_ladder(w, ShiftKind::visual, 3, 99);
  REQUIRE(vis.size() == 3);
  CHECK(vis[0].id == "visual-s99-L1of3");
  double last = 0.0;
  for (std::size_t i = 0; i < vis.size(); ++i) {
    CHECK(vis[i].severity == Approx((i + 1) / 3.0).margin(1e-15));
    CHECK(vis[i].p == vis[0].p);
    const double d = js(vis[i].p.visual_marginal(), vis[i].q.visual_marginal());
    CHECK(d >= last);
    last = d;
    CHECK(js(vis[i].p.text_marginal(), vis[i].q.text_marginal()) <= 1e-9);
  }

  const auto txt = severity_ladder(w, ShiftKind::text, 2, 7);
  REQUIRE(txt.size() == 2);
  CHECK(txt[1].severity == 1.0);
  CHECK(js(txt[0].p.text_marginal(), txt[0].q.text_marginal()) <=
        js(txt[1].p.text_marginal(), txt[1].q.text_marginal()));

  const auto jl = severity_ladder(w, ShiftKind::joint, 6, 3);
  last = 0.0;
  for (const auto& sc : jl) {
    const double d = js(sc.p.input_marginal(), sc.q.input_marginal());
    CHECK(d >= last);
    last = d;
  }

  // same seed, same ladder
  const auto again = severity_ladder(w, ShiftKind::visual, 3, 99);
  for (std::size_t i = 0; i < 3; ++i) CHECK(again[i].q == vis[i].q);
  CHECK_THROWS_AS(severity_ladder(w, ShiftKind::visual, 1, 1), ContractError);
}

TEST_CASE("conditional shifts", "[synthgen]") {
  numkit::Rng rng(14);
  const auto w = SceneWorld::random(4, 4, 4, 2, rng);
  const auto m = discrete::ConditionalModel::random(4, 4, 4, rng, 0.5);

  const auto strong = make_conditional_shift_pair(w, 1.0, rng);
  CHECK(strong.q.input_marginal() == strong.p.input_marginal());
  CHECK(expected_row_js(strong.p, strong.q) > 0.05);
  CHECK(strong.consistency == metrics::Consistency::none);
  CHECK_THROWS_AS(metrics::theorem2_bound(strong.p, strong.q, m), PreconditionError);

  const auto weak = make_conditional_shift_pair(w, 0.01, rng);
  const auto t3 = metrics::theorem3_bound(weak.p, weak.q, m);
  const auto t2 = metrics::theorem2_bound(weak.p, weak.p, m);
  CHECK(t3.js_xv == 0.0);
  CHECK(t3.js_cond_t_given_v == 0.0);
  CHECK(t3.js_y_given_x_term < metrics::theorem3_bound(strong.p, strong.q, m).js_y_given_x_term);
  CHECK(t3.rhs_total - t2.rhs_total < 4.0 * t3.js_y_given_x_term + 0.05);
  CHECK(metrics::emid(weak.p, weak.q, m) <= t3.rhs_total + metrics::kBoundSlack);
}

TEST_CASE("discrete sampling", "[synthgen]") {
  numkit::Rng rng(1);
  const auto point = DiscreteJoint::from_tensor(2, 2, 2, {0, 0, 0, 0, 0, 1, 0, 0});
  for (const auto& d : sample_discrete(point, 100, rng)) CHECK(d == TokenTriple{1, 0, 1});

  const auto j = DiscreteJoint::from_tensor(2, 2, 2, {0.05, 0.1, 0.15, 0.2, 0.1, 0.05, 0.3, 0.05});
  const std::size_t n = 1000000;
  const auto draws = sample_discrete(j, n, rng);
  std::vector<double> freq(8, 0.0);
  for (const auto& d : draws) freq[(d.v * 2 + d.t) * 2 + d.y] += 1.0 / n;
  for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(freq[i] - j.tensor()[i]) <= 0.005);

  numkit::Rng a(9), b(9);
  CHECK(sample_discrete(j, 500, a) == sample_discrete(j, 500, b));
  CHECK_THROWS_AS(sample_discrete(j, 0, a), ContractError);

  const auto batch = one_hot_batch(j, draws);
  CHECK(batch.dx() == 4);
  CHECK(batch.dy() == 2);
  CHECK(batch.size() == n);
}

TEST_CASE("gaussian pairs", "[synthgen]") {
  CHECK(gaussian_mi(0.9) == Approx(0.8303656034108254).margin(1e-15));
  CHECK(gaussian_mi(0.6, 3) == Approx(3 * 0.22314355131420974).margin(1e-14));
  CHECK_THROWS_AS(gaussian_mi(1.0), ContractError);

  numkit::Rng rng(2);
  const std::size_t n = 20000;
  auto corr = [](const estimators::SampleBatch& b) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < b.size(); ++i) mx += b.x()[i], my += b.y()[i];
    mx /= b.size(), my /= b.size();
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < b.size(); ++i) {
      sxy += (b.x()[i] - mx) * (b.y()[i] - my);
      sxx += (b.x()[i] - mx) * (b.x()[i] - mx);
      syy += (b.y()[i] - my) * (b.y()[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
  };
  CHECK(std::abs(corr(sample_gaussian_pairs(1, 0.0, 0.0, n, rng))) <= 3.0 / std::sqrt(double(n)));
  CHECK(corr(sample_gaussian_pairs(1, 0.9, 0.0, n, rng)) == Approx(0.9).margin(0.01));

  GaussianWorld gw;
  gw.mean_shift = 1.5;
  const auto b = sample_gaussian_pairs(gw, n, rng);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < n; ++i) mx += b.x()[i] / n, my += b.y()[i] / n;
  CHECK(std::abs(mx - my - 1.5) <= 3.0 * std::sqrt(2.0 / n));

  const auto rp = sample_response_pairs(gw, 100, rng);
  CHECK(rp.analytic_emi == Approx(-0.4636702840303701).margin(1e-15));
  CHECK(std::vector<double>(rp.model.x().begin(), rp.model.x().end()) ==
        std::vector<double>(rp.reference.x().begin(), rp.reference.x().end()));
}

TEST_CASE("feature dump and bundle round trip", "[synthgen]") {
  numkit::Rng rng(6);
  const auto b = sample_gaussian_pairs(3, 0.4, 0.1, 50, rng);
  std::stringstream ss;
  estimators::write_feature_dump(ss, b);
  CHECK(ss.str().rfind("#emi-features v1 d_x=3 d_y=3\n0\t", 0) == 0);
  CHECK(estimators::read_feature_dump(ss) == b);

  std::stringstream bad("#emi-features v2 d_x=1 d_y=1\n");
  CHECK_THROWS_AS(estimators::read_feature_dump(bad), ContractError);
  std::stringstream shortrow("#emi-features v1 d_x=2 d_y=1\n0\t1.0\t2.0\n");
  CHECK_THROWS_AS(estimators::read_feature_dump(shortrow), ContractError);

  const auto w = SceneWorld::random(3, 3, 3, 3, rng);
  const auto sc = make_consistent_pair(w, ShiftKind::joint, 0.5, rng);
  const auto dir = std::filesystem::temp_directory_path() / "emid_bundle_test";
  std::filesystem::remove_all(dir);
  const auto samples = one_hot_batch(sc.q, sample_discrete(sc.q, 20, rng));
  write_bundle(dir, sc, &samples);
  const auto back = read_bundle(dir);
  CHECK(back.scenario.p == sc.p);
  CHECK(back.scenario.q == sc.q);
  CHECK(back.scenario.id == sc.id);
  CHECK(back.scenario.seed == sc.seed);
  REQUIRE(back.samples);
  CHECK(*back.samples == samples);
  std::filesystem::remove_all(dir);
}
