#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "emid/analysis/report.hpp"
#include "emid/discrete/model.hpp"
#include "emid/estimators/divergence.hpp"
#include "emid/estimators/feature_dump.hpp"
#include "emid/pipeline/config.hpp"
#include "emid/pipeline/suites.hpp"
#include "emid/synthgen/sampling.hpp"
#include "emid/synthgen/shift.hpp"

namespace emid::pipeline {

/// The fixed model every scenario of a sweep is scored with, built from the
/// base joint.
inline ConditionalModel build_model(const ModelSpec& spec, const DiscreteJoint& base, numkit::Rng rng) {
  switch (spec.type) {
    case ModelSpec::Type::true_conditional: return ConditionalModel::true_conditional(base);
    case ModelSpec::Type::uniform: return ConditionalModel::uniform(base.nv(), base.nt(), base.ny());
    case ModelSpec::Type::perturbed: return detail::perturbed_model(base, rng, spec.noise);
    case ModelSpec::Type::tuned: {
      discrete::TuneOptions opt;
      opt.steps = spec.steps;
      opt.lr = spec.lr > 0.0 ? spec.lr : discrete::safe_learning_rate(base);
      return discrete::instruction_tune(base, ConditionalModel::uniform(base.nv(), base.nt(), base.ny()), opt).model;
    }
  }
  throw ContractError("build_model: unknown model type");
}

struct SampleEstimate {
  std::string id;
  std::size_t n = 0;
  double rjsd_x = 0.0, rjsd_y = 0.0, mmd_x = 0.0;
};

struct SweepResult {
  synthgen::SceneWorld world;
  std::vector<synthgen::ShiftScenario> scenarios;
  std::vector<analysis::BoundReport> reports;
  std::vector<SampleEstimate> estimates;
  std::vector<std::pair<estimators::SampleBatch, estimators::SampleBatch>> samples;  // per scenario when sampled
  std::size_t ladders = 0;
  std::size_t non_monotone_ladders = 0;
  std::size_t bound_violations = 0;
};

inline std::string ladder_label(synthgen::ShiftKind k, std::size_t l) { return synthgen::to_string(k) + "-" + std::to_string(l); }

inline SweepResult run_sweep(const RunConfig& cfg, std::size_t jobs = 1) {
  const auto& sw = cfg.sweep;
  const numkit::Rng root(cfg.seed);
  auto world_rng = root.child("world");
  SweepResult res;
  res.world = synthgen::SceneWorld::random(sw.nv, sw.nt, sw.ny, sw.scenes, world_rng);
  const auto base = res.world.joint();
  const auto model = build_model(cfg.model, base, root.child("model"));

  std::vector<std::string> ladder_of;
  for (auto kind : sw.kinds)
    for (std::size_t l = 0; l < sw.ladders; ++l) {
      const std::uint64_t seed = root.child("ladder-" + synthgen::to_string(kind), l).seed();
      auto ladder = synthgen::severity_ladder(res.world, kind, sw.levels, seed);
      if (sw.include_baseline) {
        auto zero = synthgen::make_scenario(res.world, kind, 0.0, {}, seed);
        zero.id = synthgen::to_string(kind) + "-s" + std::to_string(seed) + "-L0of" + std::to_string(sw.levels);
        ladder.insert(ladder.begin(), std::move(zero));
      }
      for (auto& sc : ladder) {
        res.scenarios.push_back(std::move(sc));
        ladder_of.push_back(ladder_label(kind, l));
      }
      ++res.ladders;
    }

  analysis::EvaluateOptions opt;
  opt.slack = std::max(cfg.tolerance, 0.0);
  opt.allow_single_modality = sw.allow_single_modality;
  res.reports.resize(res.scenarios.size());
  if (sw.samples > 0) {
    res.estimates.resize(res.scenarios.size());
    res.samples.resize(res.scenarios.size());
  }
  parallel_for(res.scenarios.size(), jobs, [&](std::size_t i) {
    const auto& sc = res.scenarios[i];
    auto r = analysis::evaluate_scenario(sc, model, opt, ladder_of[i]);
    if (cfg.tolerance < 0.0) r.theorem2_holds = r.theorem3_holds = r.corollary_holds = false;
    res.reports[i] = std::move(r);
    if (sw.samples == 0) return;
    auto rng = root.child("samples", i);
    auto bp = synthgen::one_hot_batch(sc.p, synthgen::sample_discrete(sc.p, sw.samples, rng));
    auto bq = synthgen::one_hot_batch(sc.q, synthgen::sample_discrete(sc.q, sw.samples, rng));
    auto& e = res.estimates[i];
    e.id = sc.id;
    e.n = sw.samples;
    e.rjsd_x = estimators::rjsd(bp.x(), bq.x(), bp.dx());
    e.rjsd_y = estimators::rjsd(bp.y(), bq.y(), bp.dy());
    e.mmd_x = estimators::mmd(bp.x(), bq.x(), bp.dx());
    res.samples[i] = {std::move(bp), std::move(bq)};
  });

  for (const auto& r : res.reports)
    if (!r.all_hold()) ++res.bound_violations;
  // partial bound must not decrease along a ladder
  for (std::size_t i = 0; i < res.reports.size();) {
    std::size_t j = i;
    bool mono = true;
    while (j + 1 < res.reports.size() && res.reports[j + 1].ladder == res.reports[i].ladder) {
      const auto& a = res.reports[j].partial;
      const auto& b = res.reports[j + 1].partial;
      if (a && b && *b < *a - 1e-12) mono = false;
      ++j;
    }
    if (!mono) ++res.non_monotone_ladders;
    i = j + 1;
  }
  return res;
}

/// Long format: one row per (scenario, metric) with severity as x.
inline void write_plot_data_csv(std::ostream& os, const std::vector<analysis::BoundReport>& reports) {
  os << "ladder,kind,severity,metric,value\n";
  for (const auto& r : reports) {
    auto row = [&](const char* metric, double v) {
      os << r.ladder << ',' << r.kind << ',' << analysis::fmt(r.severity) << ',' << metric << ',' << analysis::fmt(v) << '\n';
    };
    row("emid", r.emid);
    row("abs_emid", std::abs(r.emid));
    row("emi_q", r.emi_q);
    row("win_rate_q", r.wr_q);
    row("theorem3_rhs", r.theorem3.rhs_total);
    if (r.theorem2) row("theorem2_rhs", r.theorem2->rhs_total);
    if (r.partial) row("partial_bound", *r.partial);
  }
}

inline void write_estimates_csv(std::ostream& os, const std::vector<SampleEstimate>& rows) {
  os << "id,n,rjsd_x,rjsd_y,mmd_x\n";
  for (const auto& e : rows)
    os << e.id << ',' << e.n << ',' << analysis::fmt(e.rjsd_x) << ',' << analysis::fmt(e.rjsd_y) << ',' << analysis::fmt(e.mmd_x)
       << '\n';
}

}  // namespace emid::pipeline
