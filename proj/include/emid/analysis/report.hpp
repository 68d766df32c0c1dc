#pragma once

#include <charconv>
#include <cmath>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "emid/analysis/correlation.hpp"
#include "emid/discrete/model.hpp"
#include "emid/metrics/metrics.hpp"
#include "emid/synthgen/shift.hpp"

namespace emid::analysis {

using nlohmann::json;

/// Shortest round-trip decimal text.
inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline json to_json(const metrics::BoundTerms& b) {
  return json{{"variant", metrics::to_string(b.variant)},
              {"consistency", metrics::to_string(b.consistency)},
              {"js_xv", b.js_xv},
              {"js_xt", b.js_xt},
              {"js_cond_t_given_v", b.js_cond_t_given_v},
              {"js_cond_v_given_t", b.js_cond_v_given_t},
              {"js_y_given_x_term", b.js_y_given_x_term},
              {"delta_p", b.delta_p},
              {"delta_q", b.delta_q},
              {"tv_p", b.tv_p},
              {"tv_q", b.tv_q},
              {"h_hat", b.h_hat},
              {"rhs_total", b.rhs_total}};
}

inline metrics::BoundTerms bound_terms_from_json(const json& j) {
  metrics::BoundTerms b;
  b.variant = metrics::bound_variant_from_string(j.at("variant").get<std::string>());
  b.consistency = metrics::consistency_from_string(j.at("consistency").get<std::string>());
  b.js_xv = j.at("js_xv").get<double>();
  b.js_xt = j.at("js_xt").get<double>();
  b.js_cond_t_given_v = j.at("js_cond_t_given_v").get<double>();
  b.js_cond_v_given_t = j.at("js_cond_v_given_t").get<double>();
  b.js_y_given_x_term = j.at("js_y_given_x_term").get<double>();
  b.delta_p = j.at("delta_p").get<double>();
  b.delta_q = j.at("delta_q").get<double>();
  b.tv_p = j.at("tv_p").get<double>();
  b.tv_q = j.at("tv_q").get<double>();
  b.h_hat = j.at("h_hat").get<double>();
  b.rhs_total = j.at("rhs_total").get<double>();
  return b;
}

/// Everything computed for one (P, Q, model) scenario.
struct BoundReport {
  std::string id;
  std::string kind;
  double severity = 0.0;
  std::uint64_t seed = 0;
  std::string ladder;
  metrics::Consistency consistency = metrics::Consistency::none;
  double emi_p = 0.0, emi_q = 0.0, emid = 0.0;
  double wr_p = 0.0, wr_q = 0.0;
  double pm_p = 0.0, pm_q = 0.0, rm_p = 0.0, rm_q = 0.0;
  std::optional<metrics::BoundTerms> theorem2;  // absent when the consistency precondition fails
  std::optional<metrics::BoundTerms> corollary;
  std::optional<double> partial;
  metrics::BoundTerms theorem3;
  bool theorem2_holds = true, theorem3_holds = true, corollary_holds = true;

  bool all_hold() const { return theorem2_holds && theorem3_holds && corollary_holds; }
};

struct EvaluateOptions {
  double slack = metrics::kBoundSlack;
  // Run theorem 2 in single-modality mode when full consistency fails.
  bool allow_single_modality = false;
};

inline BoundReport evaluate_scenario(const synthgen::ShiftScenario& sc, const discrete::ConditionalModel& m,
                                     const EvaluateOptions& opt = {}, const std::string& ladder = "") {
  BoundReport r;
  r.id = sc.id;
  r.kind = synthgen::to_string(sc.kind);
  r.severity = sc.severity;
  r.seed = sc.seed;
  r.ladder = ladder;
  r.consistency = sc.consistency;
  r.emi_p = metrics::emi(sc.p, m);
  r.emi_q = metrics::emi(sc.q, m);
  r.emid = metrics::emid(sc.p, sc.q, m);
  r.wr_p = metrics::win_rate(sc.p, m);
  r.wr_q = metrics::win_rate(sc.q, m);
  r.pm_p = metrics::pm(sc.p, m);
  r.pm_q = metrics::pm(sc.q, m);
  r.rm_p = metrics::rm(sc.p, m);
  r.rm_q = metrics::rm(sc.q, m);

  const auto cr = metrics::consistency_report(sc.p, sc.q);
  std::optional<metrics::Consistency> mode;
  if (metrics::satisfies(cr, metrics::Consistency::full))
    mode = metrics::Consistency::full;
  else if (opt.allow_single_modality && metrics::satisfies(cr, metrics::Consistency::single_modality))
    mode = metrics::Consistency::single_modality;
  if (mode) {
    r.theorem2 = metrics::theorem2_bound(sc.p, sc.q, m, *mode);
    r.corollary = metrics::corollary_tv_bound(sc.p, sc.q, m, *mode);
    r.partial = r.theorem2->marginal_part();
    r.theorem2_holds = r.emid <= r.theorem2->rhs_total + opt.slack;
    r.corollary_holds = r.emid <= r.corollary->rhs_total + opt.slack;
  }
  r.theorem3 = metrics::theorem3_bound(sc.p, sc.q, m);
  r.theorem3_holds = r.emid <= r.theorem3.rhs_total + opt.slack;
  return r;
}

inline json to_json(const BoundReport& r) {
  json j{{"id", r.id},         {"kind", r.kind},   {"severity", r.severity},
         {"seed", r.seed},     {"ladder", r.ladder}, {"consistency", metrics::to_string(r.consistency)},
         {"emi_p", r.emi_p},   {"emi_q", r.emi_q}, {"emid", r.emid},
         {"wr_p", r.wr_p},     {"wr_q", r.wr_q},   {"pm_p", r.pm_p},
         {"pm_q", r.pm_q},     {"rm_p", r.rm_p},   {"rm_q", r.rm_q}};
  j["theorem2"] = r.theorem2 ? to_json(*r.theorem2) : json(nullptr);
  j["corollary"] = r.corollary ? to_json(*r.corollary) : json(nullptr);
  j["partial"] = r.partial ? json(*r.partial) : json(nullptr);
  j["theorem3"] = to_json(r.theorem3);
  j["theorem2_holds"] = r.theorem2_holds;
  j["theorem3_holds"] = r.theorem3_holds;
  j["corollary_holds"] = r.corollary_holds;
  return j;
}

inline BoundReport bound_report_from_json(const json& j) {
  BoundReport r;
  r.id = j.at("id").get<std::string>();
  r.kind = j.at("kind").get<std::string>();
  r.severity = j.at("severity").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.ladder = j.at("ladder").get<std::string>();
  r.consistency = metrics::consistency_from_string(j.at("consistency").get<std::string>());
  using Field = std::pair<const char*, double BoundReport::*>;
  for (const auto& [k, f] : std::initializer_list<Field>{
           {"emi_p", &BoundReport::emi_p}, {"emi_q", &BoundReport::emi_q}, {"emid", &BoundReport::emid},
           {"wr_p", &BoundReport::wr_p},   {"wr_q", &BoundReport::wr_q},   {"pm_p", &BoundReport::pm_p},
           {"pm_q", &BoundReport::pm_q},   {"rm_p", &BoundReport::rm_p},   {"rm_q", &BoundReport::rm_q}})
    r.*f = j.at(k).get<double>();
  if (!j.at("theorem2").is_null()) r.theorem2 = bound_terms_from_json(j.at("theorem2"));
  if (!j.at("corollary").is_null()) r.corollary = bound_terms_from_json(j.at("corollary"));
  if (!j.at("partial").is_null()) r.partial = j.at("partial").get<double>();
  r.theorem3 = bound_terms_from_json(j.at("theorem3"));
  r.theorem2_holds = j.at("theorem2_holds").get<bool>();
  r.theorem3_holds = j.at("theorem3_holds").get<bool>();
  r.corollary_holds = j.at("corollary_holds").get<bool>();
  return r;
}

/// The paired series the correlation step consumes, keyed by scenario id.
/// Series needing theorem 2 only take scenarios where it applied.
inline std::vector<PairedSeries> sweep_table(const std::vector<BoundReport>& reports) {
  if (reports.size() < 3) throw ContractError("sweep_table: need at least 3 reports");
  std::vector<PairedSeries> out(6);
  out[0].name = "emi_vs_win_rate";
  out[1].name = "emid_vs_theorem2_rhs";
  out[2].name = "abs_emid_vs_theorem2_rhs";
  out[3].name = "emid_vs_theorem3_rhs";
  out[4].name = "emid_vs_partial_bound";
  out[5].name = "abs_emid_vs_partial_bound";
  for (const auto& r : reports) {
    out[0].push(r.id, r.emi_q, r.wr_q);
    if (r.theorem2) {
      out[1].push(r.id, r.emid, r.theorem2->rhs_total);
      out[2].push(r.id, std::abs(r.emid), r.theorem2->rhs_total);
    }
    out[3].push(r.id, r.emid, r.theorem3.rhs_total);
    if (r.partial) {
      out[4].push(r.id, r.emid, *r.partial);
      out[5].push(r.id, std::abs(r.emid), *r.partial);
    }
  }
  return out;
}

inline void write_scenarios_csv(std::ostream& os, const std::vector<BoundReport>& reports) {
  os << "id,kind,ladder,severity,seed,consistency,emi_p,emi_q,emid,wr_p,wr_q,pm_p,pm_q,rm_p,rm_q,"
        "theorem2_rhs,corollary_rhs,partial_bound,theorem3_rhs,h_hat,js_xv,js_xt,delta_p,delta_q,"
        "theorem2_holds,theorem3_holds,corollary_holds\n";
  auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  for (const auto& r : reports) {
    os << r.id << ',' << r.kind << ',' << r.ladder << ',' << fmt(r.severity) << ',' << r.seed << ','
       << metrics::to_string(r.consistency) << ',' << fmt(r.emi_p) << ',' << fmt(r.emi_q) << ',' << fmt(r.emid) << ','
       << fmt(r.wr_p) << ',' << fmt(r.wr_q) << ',' << fmt(r.pm_p) << ',' << fmt(r.pm_q) << ',' << fmt(r.rm_p) << ','
       << fmt(r.rm_q) << ',' << opt(r.theorem2 ? std::optional(r.theorem2->rhs_total) : std::nullopt) << ','
       << opt(r.corollary ? std::optional(r.corollary->rhs_total) : std::nullopt) << ',' << opt(r.partial) << ','
       << fmt(r.theorem3.rhs_total) << ',' << fmt(r.theorem3.h_hat) << ',' << fmt(r.theorem3.js_xv) << ','
       << fmt(r.theorem3.js_xt) << ',' << fmt(r.theorem3.delta_p) << ',' << fmt(r.theorem3.delta_q) << ','
       << r.theorem2_holds << ',' << r.theorem3_holds << ',' << r.corollary_holds << '\n';
  }
}

struct CorrelationRow {
  std::string series;
  std::optional<CorrResult> result;  // empty: statistic undefined or n < 3
  std::size_t n = 0;
  std::string note;
};

inline std::vector<CorrelationRow> correlate_all(const std::vector<PairedSeries>& series, const PermutationOptions& opt) {
  std::vector<CorrelationRow> rows;
  for (const auto& s : series)
    for (auto m : {CorrMethod::pearson, CorrMethod::spearman, CorrMethod::kendall}) {
      CorrelationRow row{s.name + ":" + to_string(m), std::nullopt, s.size(), ""};
      if (s.size() < 3) {
        row.note = "n<3";
      } else {
        try {
          row.result = correlate(m, s, opt);
        } catch (const UndefinedStatistic&) {
          row.note = "constant series";
        }
      }
      rows.push_back(std::move(row));
    }
  return rows;
}

inline void write_correlations_csv(std::ostream& os, const std::vector<CorrelationRow>& rows) {
  os << "series,method,statistic,p_value,n,permutations,exact,seed,note\n";
  for (const auto& r : rows) {
    const auto colon = r.series.rfind(':');
    os << r.series.substr(0, colon) << ',' << r.series.substr(colon + 1) << ',';
    if (r.result)
      os << fmt(r.result->statistic) << ',' << fmt(r.result->p_value) << ',' << r.n << ',' << r.result->permutations << ','
         << r.result->exact << ',' << r.result->seed << ',';
    else
      os << ",," << r.n << ",,,,";
    os << r.note << '\n';
  }
}

}  // namespace emid::analysis
