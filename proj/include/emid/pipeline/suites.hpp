#pragma once

#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "emid/analysis/report.hpp"
#include "emid/discrete/info.hpp"
#include "emid/discrete/json_io.hpp"
#include "emid/discrete/model.hpp"
#include "emid/metrics/metrics.hpp"
#include "emid/pipeline/config.hpp"
#include "emid/synthgen/shift.hpp"

namespace emid::pipeline {

using discrete::ConditionalModel;
using discrete::DiscreteJoint;

/// Runs fn(0..n-1) on up to `jobs` threads. Work is split by index, so the
/// result of each call depends only on its index.
inline void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += jobs) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!err) err = std::current_exception();
          return;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

// One replayable check. Which fields are set depends on the suite.
struct Instance {
  std::string suite;
  std::string check;  // appendix: c2, c3, c5, pinsker
  std::size_t index = 0;
  std::uint64_t seed = 0;
  double tolerance = metrics::kBoundSlack;
  std::optional<DiscreteJoint> p, q;
  std::optional<ConditionalModel> model;
  double epsilon = 0.0, c = 0.0;
  std::vector<double> a, b, f;
};

inline json to_json(const Instance& in) {
  json j{{"suite", in.suite}, {"index", in.index}, {"seed", in.seed}, {"tolerance", in.tolerance}};
  if (!in.check.empty()) j["check"] = in.check;
  if (in.p) j["p"] = discrete::to_json(*in.p);
  if (in.q) j["q"] = discrete::to_json(*in.q);
  if (in.model) j["model"] = discrete::to_json(*in.model);
  if (in.suite == "theorem1") {
    j["epsilon"] = in.epsilon;
    j["c"] = in.c;
  }
  if (in.suite == "appendix" && in.check == "c2") j["c"] = in.c;
  if (!in.a.empty()) j["a"] = in.a;
  if (!in.b.empty()) j["b"] = in.b;
  if (!in.f.empty()) j["f"] = in.f;
  return j;
}

inline Instance instance_from_json(const json& j) {
  Instance in;
  in.suite = j.at("suite").get<std::string>();
  in.check = j.value("check", std::string());
  in.index = j.at("index").get<std::size_t>();
  in.seed = j.at("seed").get<std::uint64_t>();
  in.tolerance = j.at("tolerance").get<double>();
  if (j.contains("p")) in.p = discrete::joint_from_json(j["p"]);
  if (j.contains("q")) in.q = discrete::joint_from_json(j["q"]);
  if (j.contains("model")) in.model = discrete::model_from_json(j["model"]);
  in.epsilon = j.value("epsilon", 0.0);
  in.c = j.value("c", 0.0);
  in.a = j.value("a", std::vector<double>{});
  in.b = j.value("b", std::vector<double>{});
  in.f = j.value("f", std::vector<double>{});
  return in;
}

namespace detail {

inline bool within(double lhs, double rhs, double tol) { return tol >= 0.0 && lhs <= rhs + tol; }

template <typename T>
const T& need(const std::optional<T>& v, const char* what) {
  if (!v) throw ContractError(std::string("instance is missing '") + what + "'");
  return *v;
}

}  // namespace detail

/// Recomputes every quantity of one instance. The record's "holds" is false
/// for a violation; a negative tolerance flags every instance.
inline json evaluate(const Instance& in) {
  using detail::need;
  using detail::within;
  const double tol = in.tolerance;
  json r{{"suite", in.suite}, {"index", in.index}, {"seed", in.seed}};
  if (!in.check.empty()) r["check"] = in.check;

  if (in.suite == "lemma1" || in.suite == "theorem1") {
    const auto& p = need(in.p, "p");
    const auto& m = need(in.model, "model");
    metrics::GapCheck g;
    if (in.suite == "lemma1") {
      g = metrics::lemma1_check(p, m, std::max(tol, 0.0));
    } else {
      try {
        g = metrics::theorem1_check(p, m, in.epsilon, in.c, std::max(tol, 0.0));
      } catch (const PreconditionError& e) {
        r["holds"] = false;
        r["note"] = e.what();
        return r;
      }
      r["epsilon"] = in.epsilon;
      r["c"] = in.c;
    }
    r["lhs"] = g.gap;
    r["rhs"] = g.bound;
    r["delta"] = g.delta;
    r["delta_fwd"] = g.delta_fwd;
    r["delta_rev"] = std::isfinite(g.delta_rev) ? json(g.delta_rev) : json("inf");
    r["skipped"] = g.skipped;
    r["holds"] = g.skipped ? tol >= 0.0 : within(g.gap, g.bound, tol);
    return r;
  }

  if (in.suite == "theorem2" || in.suite == "theorem3" || in.suite == "corollary") {
    const auto& p = need(in.p, "p");
    const auto& q = need(in.q, "q");
    const auto& m = need(in.model, "model");
    const double e = metrics::emid(p, q, m);
    metrics::BoundTerms b;
    if (in.suite == "theorem2")
      b = metrics::theorem2_bound(p, q, m);
    else if (in.suite == "theorem3")
      b = metrics::theorem3_bound(p, q, m);
    else
      b = metrics::corollary_tv_bound(p, q, m);
    r["lhs"] = e;
    r["rhs"] = b.rhs_total;
    r["terms"] = analysis::to_json(b);
    r["holds"] = within(e, b.rhs_total, tol);
    return r;
  }

  if (in.suite == "identities") {
    const auto& j = need(in.p, "p");
    const auto& m = need(in.model, "model");
    const auto lb = discrete::lower_bound_identity_check(j, m);
    const double two_route = std::abs(discrete::generation_mi(j, m) - discrete::mutual_information(discrete::tensor_joint(j, m)));
    const double whole = discrete::mutual_information(j, discrete::Grouping::input_response);
    const double chain = std::max(
        std::abs(whole - discrete::mutual_information(j, discrete::Grouping::visual_response) -
                 discrete::mutual_information(j, discrete::Grouping::text_response_given_v)),
        std::abs(whole - discrete::mutual_information(j, discrete::Grouping::text_response) -
                 discrete::mutual_information(j, discrete::Grouping::visual_response_given_t)));
    const auto pmrm = metrics::pm_rm_identity_enumerate(j, m);
    const double pmrm_res = std::max(pmrm.max_pm_from_rm, pmrm.max_rm_from_pm);
    r["lower_bound_residual"] = lb.residual;
    r["two_route_residual"] = two_route;
    r["chain_rule_residual"] = chain;
    r["pm_rm_residual"] = pmrm_res;
    r["jensen_holds"] = pmrm.jensen_holds;
    r["holds"] = tol >= 0.0 && lb.residual <= 1e-10 && two_route <= 1e-12 && chain <= 1e-10 && pmrm_res <= 1e-10 &&
                 pmrm.jensen_holds && lb.lower_bound_holds;
    return r;
  }

  if (in.suite == "appendix") {
    double lhs = 0.0, rhs = 0.0;
    if (in.check == "c2") {
      for (std::size_t i = 0; i < in.a.size(); ++i) lhs += (in.a[i] - in.b[i]) * in.f[i];
      lhs = std::abs(lhs);
      rhs = in.c * discrete::tv(in.a, in.b);
    } else if (in.check == "c3") {
      lhs = std::abs(discrete::entropy(in.a) - discrete::entropy(in.b));
      rhs = 4.0 * std::pow(discrete::js(in.a, in.b), 0.25);
    } else if (in.check == "c5") {
      const auto& j = need(in.p, "p");
      const auto& m = need(in.model, "model");
      lhs = discrete::tv(j.response_marginal(), discrete::model_response_marginal(j, m));
      rhs = std::sqrt(2.0 * discrete::expected_kl_model_data(j, m).finite_or_throw());
    } else if (in.check == "pinsker") {
      const double t = discrete::tv(in.a, in.b);
      const double jsd = discrete::js(in.a, in.b);
      const double bound = std::sqrt(2.0 * discrete::kl(in.a, in.b).finite_or_throw());
      r["js"] = jsd;
      r["tv"] = t;
      r["sqrt_2kl"] = bound;
      r["holds"] = within(jsd, t, tol) && within(t, bound, tol);
      return r;
    } else {
      throw ContractError("unknown appendix check '" + in.check + "'");
    }
    r["lhs"] = lhs;
    r["rhs"] = rhs;
    r["holds"] = within(lhs, rhs, tol);
    return r;
  }
  throw ContractError("unknown suite '" + in.suite + "'");
}

namespace detail {

inline std::size_t draw_size(numkit::Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.index(hi - lo + 1); }

inline DiscreteJoint draw_joint(numkit::Rng& rng, std::size_t max_alpha) {
  const std::size_t nv = draw_size(rng, 1, max_alpha), nt = draw_size(rng, 1, max_alpha), ny = draw_size(rng, 2, max_alpha);
  static constexpr double alphas[] = {0.3, 1.0, 3.0};
  return discrete::random_joint(nv, nt, ny, rng, alphas[rng.index(3)]);
}

inline ConditionalModel perturbed_model(const DiscreteJoint& j, numkit::Rng& rng, double noise) {
  std::vector<double> logits(j.nx() * j.ny());
  for (std::size_t x = 0; x < j.nx(); ++x) {
    const auto row = j.response_row(x);
    for (std::size_t y = 0; y < j.ny(); ++y) logits[x * j.ny() + y] = std::log(row[y]) + noise * rng.normal();
  }
  return ConditionalModel::from_logits(j.nv(), j.nt(), j.ny(), std::move(logits));
}

// Mix of model families so the checks see both near-truth and far models.
inline ConditionalModel draw_model(const DiscreteJoint& j, numkit::Rng& rng) {
  switch (rng.index(4)) {
    case 0: return ConditionalModel::random(j.nv(), j.nt(), j.ny(), rng, rng.uniform(0.1, 3.0));
    case 1: return perturbed_model(j, rng, rng.uniform(0.0, 2.0));
    case 2: return ConditionalModel::uniform(j.nv(), j.nt(), j.ny());
    default: return ConditionalModel::true_conditional(j);
  }
}

inline synthgen::SceneWorld draw_world(numkit::Rng& rng, std::size_t max_alpha, std::size_t min_scenes) {
  const std::size_t nv = draw_size(rng, min_scenes, max_alpha), nt = draw_size(rng, min_scenes, max_alpha);
  const std::size_t ny = draw_size(rng, 2, max_alpha);
  const std::size_t k = draw_size(rng, min_scenes, std::min(nv, nt));
  return synthgen::SceneWorld::random(nv, nt, ny, k, rng);
}

inline std::vector<double> draw_simplex(numkit::Rng& rng, std::size_t n) {
  static constexpr double alphas[] = {0.1, 0.5, 1.0, 2.0};
  return rng.dirichlet(n, alphas[rng.index(4)]);
}

}  // namespace detail

/// Builds instance `index` of `suite`; depends only on (seed, suite, index).
inline Instance make_instance(const std::string& suite, std::size_t index, std::uint64_t seed, const VerifyConfig& cfg,
                              double tolerance) {
  auto rng = numkit::Rng(seed).child(suite, index);
  Instance in;
  in.suite = suite;
  in.index = index;
  in.seed = rng.seed();
  in.tolerance = tolerance;
  const std::size_t A = cfg.max_alphabet;

  if (suite == "lemma1" || suite == "identities") {
    in.p = detail::draw_joint(rng, A);
    in.model = detail::draw_model(*in.p, rng);
  } else if (suite == "theorem1") {
    const auto j = discrete::random_joint(detail::draw_size(rng, 1, A), detail::draw_size(rng, 1, A),
                                          detail::draw_size(rng, 2, A), rng);
    const auto init = ConditionalModel::random(j.nv(), j.nt(), j.ny(), rng);
    discrete::TuneOptions opt;
    opt.steps = 500000;
    opt.lr = discrete::safe_learning_rate(j);
    opt.stop_kl = 1e-7;
    in.model = discrete::instruction_tune(j, init, opt).model;
    in.epsilon = 1e-6;
    in.c = metrics::min_support_mass(j);
    in.p = j;
  } else if (suite == "theorem2" || suite == "corollary") {
    const auto w = detail::draw_world(rng, A, 2);
    auto sc = synthgen::make_consistent_pair(w, synthgen::ShiftKind::joint, rng.uniform_pos(), rng);
    in.model = detail::draw_model(sc.p, rng);
    in.p = std::move(sc.p);
    in.q = std::move(sc.q);
  } else if (suite == "theorem3") {
    if (index % 2 == 0) {
      const auto w = detail::draw_world(rng, A, 1);
      auto sc = synthgen::make_conditional_shift_pair(w, rng.uniform_pos(), rng);
      in.p = std::move(sc.p);
      in.q = std::move(sc.q);
    } else {
      in.p = detail::draw_joint(rng, A);
      in.q = discrete::random_joint(in.p->nv(), in.p->nt(), in.p->ny(), rng, rng.uniform(0.3, 3.0));
    }
    in.model = detail::draw_model(*in.p, rng);
  } else if (suite == "appendix") {
    static const char* checks[] = {"c2", "c3", "c5", "pinsker"};
    in.check = checks[index % 4];
    if (in.check == "c5") {
      in.p = detail::draw_joint(rng, A);
      in.model = detail::draw_model(*in.p, rng);
    } else {
      const std::size_t n = detail::draw_size(rng, 2, A * A);
      in.a = detail::draw_simplex(rng, n);
      in.b = detail::draw_simplex(rng, n);
      if (in.check == "c2") {
        in.c = rng.uniform(0.1, 5.0);
        in.f.resize(n);
        for (auto& v : in.f) v = rng.uniform(0.0, in.c);
      }
    }
  } else {
    throw ContractError("unknown suite '" + suite + "'");
  }
  return in;
}

inline std::size_t suite_size(const std::string& suite, const VerifyConfig& cfg) {
  if (suite == "theorem1") return cfg.theorem1_instances;
  if (suite == "identities") return cfg.identity_instances;
  // four checks per trial
  if (suite == "appendix") return 4 * cfg.appendix_trials;
  return cfg.instances;
}

struct SuiteResult {
  std::string name;
  std::size_t instances = 0;
  std::size_t violations = 0;
  std::size_t skipped = 0;
  double min_margin = std::numeric_limits<double>::infinity();  // min(rhs - lhs)
  std::map<std::string, double> maxima;                         // worst residuals
  double seconds = 0.0;
  std::vector<json> records;       // per instance, in index order (bound suites only)
  std::vector<Instance> flagged;   // violating instances, capped

  bool passed() const { return violations == 0; }
};

inline json summary_json(const SuiteResult& s) {
  json j{{"summary", s.name},      {"instances", s.instances},
         {"violations", s.violations}, {"skipped", s.skipped},
         {"min_margin", std::isfinite(s.min_margin) ? json(s.min_margin) : json(nullptr)}};
  for (const auto& [k, v] : s.maxima) j["max_" + k] = v;
  return j;
}

inline bool keeps_records(const std::string& suite) { return suite != "identities" && suite != "appendix"; }

inline SuiteResult run_suite(const std::string& suite, std::uint64_t seed, const VerifyConfig& cfg, double tolerance,
                             std::size_t jobs = 1) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteResult res;
  res.name = suite;
  res.instances = suite_size(suite, cfg);
  std::vector<json> out(res.instances);
  std::vector<char> bad(res.instances, 0);
  parallel_for(res.instances, jobs, [&](std::size_t i) {
    const auto in = make_instance(suite, i, seed, cfg, tolerance);
    out[i] = evaluate(in);
    bad[i] = !out[i].at("holds").get<bool>();
  });
  for (std::size_t i = 0; i < res.instances; ++i) {
    const auto& r = out[i];
    if (bad[i]) {
      ++res.violations;
      if (res.flagged.size() < cfg.replay_files_per_suite) res.flagged.push_back(make_instance(suite, i, seed, cfg, tolerance));
    }
    if (r.value("skipped", false)) ++res.skipped;
    if (r.contains("lhs") && r.contains("rhs")) res.min_margin = std::min(res.min_margin, r["rhs"].get<double>() - r["lhs"].get<double>());
    for (const char* k : {"lower_bound_residual", "two_route_residual", "chain_rule_residual", "pm_rm_residual"})
      if (r.contains(k)) res.maxima[k] = std::max(res.maxima[k], r[k].get<double>());
    if (r.contains("check")) {
      const auto key = r["check"].get<std::string>() + "_violations";
      res.maxima[key] += bad[i] ? 1.0 : 0.0;
    }
    if (keeps_records(suite)) res.records.push_back(r);
  }
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

}  // namespace emid::pipeline
