#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "emid/discrete/info.hpp"
#include "emid/discrete/joint.hpp"
#include "emid/discrete/model.hpp"
#include "emid/error.hpp"

namespace emid::metrics {

using discrete::ConditionalModel;
using discrete::DiscreteJoint;

inline constexpr double kBoundSlack = 1e-9;

struct PreferenceConfig {
  enum class Reward { log_true_conditional, custom };
  Reward reward = Reward::log_true_conditional;
  std::vector<double> table;  // nx * ny, custom reward r(x, y)

  static PreferenceConfig custom(std::vector<double> t) {
    for (double v : t)
      if (!std::isfinite(v)) throw ContractError("PreferenceConfig: custom reward must be finite everywhere");
    return {Reward::custom, std::move(t)};
  }
};

/// r(x, y) for every cell; log P(y|x) may be -inf where the true row is zero.
inline std::vector<double> reward_table(const DiscreteJoint& j, const PreferenceConfig& cfg) {
  if (cfg.reward == PreferenceConfig::Reward::custom) {
    if (cfg.table.size() != j.nx() * j.ny()) throw ContractError("reward table size mismatch");
    return cfg.table;
  }
  std::vector<double> r(j.nx() * j.ny());
  for (std::size_t x = 0; x < j.nx(); ++x) {
    const auto row = j.response_row(x);
    for (std::size_t y = 0; y < j.ny(); ++y)
      r[x * j.ny() + y] = row[y] > 0.0 ? std::log(row[y]) : -std::numeric_limits<double>::infinity();
  }
  return r;
}

namespace detail {

inline double log_sigmoid(double d) { return d >= 0.0 ? -std::log1p(std::exp(-d)) : d - std::log1p(std::exp(d)); }

// Visits every (x, y, yhat) with P_X(x) > 0 and reports the probability mass
// of the triple together with both rewards. Throws when an infinite reward
// carries mass.
template <typename F>
void for_each_triple(const DiscreteJoint& j, const ConditionalModel& m, const PreferenceConfig& cfg, F&& f) {
  discrete::require_match(j, m, "preference enumeration");
  const auto r = reward_table(j, cfg);
  const auto in = j.input_marginal();
  const std::size_t ny = j.ny();
  for (std::size_t x = 0; x < j.nx(); ++x) {
    if (in[x] <= 0.0) continue;
    const auto row = j.response_row(x);
    for (std::size_t y = 0; y < ny; ++y) {
      if (row[y] <= 0.0) continue;
      for (std::size_t yh = 0; yh < ny; ++yh) {
        const double mass = in[x] * row[y] * m.prob(x, yh);
        if (mass <= 0.0) continue;
        const double ry = r[x * ny + y], ryh = r[x * ny + yh];
        if (!std::isfinite(ry) || !std::isfinite(ryh))
          throw PreconditionError("reward is -inf on a response with positive probability (input " + std::to_string(x) +
                                  ", response " + std::to_string(std::isfinite(ryh) ? y : yh) + ")");
        f(x, y, yh, mass, ry, ryh);
      }
    }
  }
}

}  // namespace detail

/// Exact E[1(r(x, yhat) > r(x, y))]; ties score 0.
inline double win_rate(const DiscreteJoint& j, const ConditionalModel& m, const PreferenceConfig& cfg = {}) {
  double s = 0.0;
  detail::for_each_triple(j, m, cfg, [&](auto, auto, auto, double mass, double ry, double ryh) {
    if (ryh > ry) s += mass;
  });
  return std::clamp(s, 0.0, 1.0);
}

inline double emi(const DiscreteJoint& j, const ConditionalModel& m) {
  return discrete::generation_mi(j, m) - discrete::mutual_information(j);
}

/// E_x[E_{yhat~theta} r(x, yhat) - E_{y~P} r(x, y)].
inline double pm(const DiscreteJoint& j, const ConditionalModel& m, const PreferenceConfig& cfg = {}) {
  discrete::require_match(j, m, "pm");
  const auto r = reward_table(j, cfg);
  const auto in = j.input_marginal();
  const std::size_t ny = j.ny();
  double s = 0.0;
  for (std::size_t x = 0; x < j.nx(); ++x) {
    if (in[x] <= 0.0) continue;
    const auto row = j.response_row(x);
    double model_side = 0.0, data_side = 0.0;
    for (std::size_t y = 0; y < ny; ++y) {
      const double rv = r[x * ny + y];
      if (m.prob(x, y) > 0.0) {
        if (!std::isfinite(rv)) throw PreconditionError("pm: reward is -inf on a model response with positive probability");
        model_side += m.prob(x, y) * rv;
      }
      if (row[y] > 0.0) data_side += row[y] * rv;
    }
    s += in[x] * (model_side - data_side);
  }
  return s;
}

/// E[log sigmoid(r(x, yhat) - r(x, y))].
inline double rm(const DiscreteJoint& j, const ConditionalModel& m, const PreferenceConfig& cfg = {}) {
  double s = 0.0;
  detail::for_each_triple(j, m, cfg, [&](auto, auto, auto, double mass, double ry, double ryh) {
    s += mass * detail::log_sigmoid(ryh - ry);
  });
  return s;
}

struct PmRmResiduals {
  double pm_from_rm = 0.0;  // |PM - (RM - log(1 - e^RM))|
  double rm_from_pm = 0.0;  // |RM - (PM - log(1 + e^PM))|
  bool skipped = false;     // e^RM within 1e-12 of 1
};

/// The two logit / log-sigmoid identities for one (PM, RM) pair linked by
/// RM = log sigmoid(PM).
inline PmRmResiduals pm_rm_identity_check(double pm_val, double rm_val) {
  if (!(rm_val < 0.0)) throw ContractError("pm_rm_identity_check: RM must be negative");
  PmRmResiduals r;
  if (std::exp(rm_val) >= 1.0 - 1e-12) {
    r.skipped = true;
    return r;
  }
  r.pm_from_rm = std::abs(pm_val - (rm_val - std::log(-std::expm1(rm_val))));
  r.rm_from_pm = std::abs(rm_val - (pm_val - std::log1p(std::exp(pm_val))));
  return r;
}

struct PmRmEnumeration {
  double max_pm_from_rm = 0.0;
  double max_rm_from_pm = 0.0;
  std::size_t triples = 0;
  std::size_t skipped = 0;
  // Aggregate relation: E[log sigmoid(d)] <= log sigmoid(E[d]) by concavity.
  bool jensen_holds = true;
};

/// Runs the identity on every enumerated (x, y, yhat) triple, where the pair
/// (d, log sigmoid(d)) is exactly what the identities relate, and checks the
/// Jensen relation between the aggregated PM and RM.
inline PmRmEnumeration pm_rm_identity_enumerate(const DiscreteJoint& j, const ConditionalModel& m,
                                                const PreferenceConfig& cfg = {}) {
  PmRmEnumeration out;
  detail::for_each_triple(j, m, cfg, [&](auto, auto, auto, double, double ry, double ryh) {
    const double d = ryh - ry;
    const auto res = pm_rm_identity_check(d, detail::log_sigmoid(d));
    ++out.triples;
    if (res.skipped) {
      ++out.skipped;
      return;
    }
    out.max_pm_from_rm = std::max(out.max_pm_from_rm, res.pm_from_rm);
    out.max_rm_from_pm = std::max(out.max_rm_from_pm, res.rm_from_pm);
  });
  out.jensen_holds = rm(j, m, cfg) <= detail::log_sigmoid(pm(j, m, cfg)) + 1e-12;
  return out;
}

// ---------------------------------------------------------------------------
// EMI vs. preference gap bounds

struct GapCheck {
  double gap = 0.0;        // |EMI - PM|
  double delta = 0.0;      // the delta plugged into delta + 4.4 delta^(1/8)
  double delta_fwd = 0.0;  // E_x KL(P_{Y|X=x} || P_theta)
  double delta_rev = 0.0;  // E_x KL(P_theta || P_{Y|X=x})
  double bound = 0.0;
  bool holds = false;
  bool skipped = false;    // infinite delta
};

inline double gap_bound(double delta) { return delta + 4.4 * std::pow(delta, 0.125); }

inline GapCheck lemma1_check(const DiscreteJoint& j, const ConditionalModel& m, double slack = kBoundSlack) {
  GapCheck c;
  const auto rev = discrete::expected_kl_model_data(j, m);
  if (rev.infinite) {
    c.skipped = true;
    c.delta_rev = std::numeric_limits<double>::infinity();
    return c;
  }
  c.delta_rev = rev.value;
  c.delta_fwd = discrete::expected_kl_data_model(j, m);
  c.delta = c.delta_rev;
  c.gap = std::abs(emi(j, m) - pm(j, m));
  c.bound = gap_bound(c.delta);
  c.holds = c.gap <= c.bound + slack;
  return c;
}

inline double theorem1_delta(double epsilon, double c) {
  return 4.4 * std::pow(epsilon, 0.125) - std::log(c) * std::sqrt(2.0 * epsilon);
}

inline double min_support_mass(const DiscreteJoint& j) {
  double mn = std::numeric_limits<double>::infinity();
  for (double v : j.tensor())
    if (v > 0.0) mn = std::min(mn, v);
  return mn;
}

inline GapCheck theorem1_check(const DiscreteJoint& j, const ConditionalModel& tuned, double epsilon, double c,
                               double slack = kBoundSlack) {
  if (!(c > 0.0)) throw PreconditionError("theorem1_check: c must be positive");
  if (c > min_support_mass(j)) throw PreconditionError("theorem1_check: c exceeds the smallest supported P_XY mass");
  GapCheck g;
  g.delta_fwd = discrete::expected_kl_data_model(j, tuned);
  if (epsilon < g.delta_fwd)
    throw PreconditionError("theorem1_check: epsilon " + std::to_string(epsilon) + " is below the achieved KL " +
                            std::to_string(g.delta_fwd));
  const auto rev = discrete::expected_kl_model_data(j, tuned);
  g.delta_rev = rev.infinite ? std::numeric_limits<double>::infinity() : rev.value;
  g.delta = theorem1_delta(epsilon, c);
  g.gap = std::abs(emi(j, tuned) - pm(j, tuned));
  g.bound = gap_bound(g.delta);
  g.holds = g.gap <= g.bound + slack;
  return g;
}

// ---------------------------------------------------------------------------
// EMID and its bounds

inline double emid(const DiscreteJoint& p, const DiscreteJoint& q, const ConditionalModel& m) {
  if (!p.same_shape(q)) throw ContractError("emid: P and Q alphabet sizes differ");
  return emi(p, m) - emi(q, m);
}

/// Max-abs row differences of the three conditionals. Rows are compared
/// wherever either side gives the conditioning value positive mass.
struct ConsistencyReport {
  double t_given_v = 0.0;
  double v_given_t = 0.0;
  double y_given_x = 0.0;
  std::string worst_row;
  double worst = 0.0;
};

inline ConsistencyReport consistency_report(const DiscreteJoint& p, const DiscreteJoint& q) {
  if (!p.same_shape(q)) throw ContractError("consistency_report: P and Q alphabet sizes differ");
  ConsistencyReport r;
  auto row_diff = [](const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
  };
  auto note = [&](double d, double& slot, const std::string& label) {
    slot = std::max(slot, d);
    if (d > r.worst) {
      r.worst = d;
      r.worst_row = label;
    }
  };
  const auto pv = p.visual_marginal(), qv = q.visual_marginal();
  for (std::size_t v = 0; v < p.nv(); ++v)
    if (pv[v] > 0.0 || qv[v] > 0.0)
      note(row_diff(p.text_given_visual(v), q.text_given_visual(v)), r.t_given_v, "X_t|X_v=" + std::to_string(v));
  const auto pt = p.text_marginal(), qt = q.text_marginal();
  for (std::size_t t = 0; t < p.nt(); ++t)
    if (pt[t] > 0.0 || qt[t] > 0.0)
      note(row_diff(p.visual_given_text(t), q.visual_given_text(t)), r.v_given_t, "X_v|X_t=" + std::to_string(t));
  const auto px = p.input_marginal(), qx = q.input_marginal();
  for (std::size_t x = 0; x < p.nx(); ++x)
    if (px[x] > 0.0 || qx[x] > 0.0)
      note(row_diff(p.response_row(x), q.response_row(x)), r.y_given_x,
           "Y|X=(" + std::to_string(x / p.nt()) + "," + std::to_string(x % p.nt()) + ")");
  return r;
}

/// Which conditionals the simplified bound requires to be shared.
///  full: X_t|X_v, X_v|X_t and Y|X (the stated assumption)
///  single_modality: Y|X and at least one of the input conditionals
enum class Consistency { full, single_modality, none };

inline std::string to_string(Consistency c) {
  switch (c) {
    case Consistency::full: return "full";
    case Consistency::single_modality: return "single_modality";
    case Consistency::none: return "none";
  }
  return "?";
}

inline Consistency consistency_from_string(const std::string& s) {
  if (s == "full") return Consistency::full;
  if (s == "single_modality") return Consistency::single_modality;
  if (s == "none") return Consistency::none;
  throw ContractError("unknown consistency mode '" + s + "'");
}

inline constexpr double kConsistencyTolerance = 1e-9;

inline bool satisfies(const ConsistencyReport& r, Consistency mode, double tol = kConsistencyTolerance) {
  switch (mode) {
    case Consistency::none: return true;
    case Consistency::full: return r.worst <= tol;
    case Consistency::single_modality: return r.y_given_x <= tol && std::min(r.t_given_v, r.v_given_t) <= tol;
  }
  return false;
}

inline void require_consistency(const DiscreteJoint& p, const DiscreteJoint& q, Consistency mode, const char* who) {
  const auto r = consistency_report(p, q);
  if (satisfies(r, mode)) return;
  std::string row = r.worst_row;
  if (mode == Consistency::single_modality && r.y_given_x <= kConsistencyTolerance) row = "X_t|X_v and X_v|X_t both";
  throw PreconditionError(std::string(who) + ": conditionals are not consistent (" + to_string(mode) +
                          "); worst row " + row + " differs by " + std::to_string(r.worst));
}

enum class BoundVariant { simplified, general, corollary_tv, partial };

inline std::string to_string(BoundVariant v) {
  switch (v) {
    case BoundVariant::simplified: return "simplified";
    case BoundVariant::general: return "general";
    case BoundVariant::corollary_tv: return "corollary_tv";
    case BoundVariant::partial: return "partial";
  }
  return "?";
}

inline BoundVariant bound_variant_from_string(const std::string& s) {
  if (s == "simplified") return BoundVariant::simplified;
  if (s == "general") return BoundVariant::general;
  if (s == "corollary_tv") return BoundVariant::corollary_tv;
  if (s == "partial") return BoundVariant::partial;
  throw ContractError("unknown bound variant '" + s + "'");
}

struct BoundTerms {
  BoundVariant variant = BoundVariant::simplified;
  Consistency consistency = Consistency::full;
  double js_xv = 0.0;
  double js_xt = 0.0;
  double js_cond_t_given_v = 0.0;  // D-bar: expectations under both P and Q
  double js_cond_v_given_t = 0.0;
  double js_y_given_x_term = 0.0;  // E_{x~P_X} js(P_{Y|x}, Q_{Y|x})^(1/4)
  double delta_p = 0.0;            // js(P_{Y_theta}, P_Y)
  double delta_q = 0.0;            // js(Q_{Y_theta}, Q_Y)
  double tv_p = 0.0;               // E_{x~P_X} tv(P_{Y|x}, P_theta(.|x))
  double tv_q = 0.0;
  double h_hat = 0.0;
  double rhs_total = 0.0;

  double marginal_part() const { return h_hat * (std::sqrt(js_xv) + std::sqrt(js_xt)); }

  double recompute() const {
    switch (variant) {
      case BoundVariant::partial: return marginal_part();
      case BoundVariant::simplified: return marginal_part() + 8.0 * std::pow(delta_p + delta_q, 0.25);
      case BoundVariant::corollary_tv: return marginal_part() + 8.0 * std::pow(tv_p + tv_q, 0.25);
      case BoundVariant::general:
        return marginal_part() + h_hat * (std::sqrt(js_cond_t_given_v) + std::sqrt(js_cond_v_given_t)) +
               4.0 * js_y_given_x_term + 8.0 * std::pow(delta_p + delta_q, 0.25);
    }
    return 0.0;
  }
};

/// max over inputs carrying mass under P or Q of H(Q_{Y|x}) + H(P_theta(.|x)).
inline double h_hat(const DiscreteJoint& p, const DiscreteJoint& q, const ConditionalModel& m) {
  const auto px = p.input_marginal(), qx = q.input_marginal();
  double best = 0.0;
  for (std::size_t x = 0; x < q.nx(); ++x) {
    if (px[x] <= 0.0 && qx[x] <= 0.0) continue;
    best = std::max(best, discrete::entropy(q.response_row(x)) + discrete::entropy(m.row(x)));
  }
  return best;
}

namespace detail {

inline BoundTerms common_terms(const DiscreteJoint& p, const DiscreteJoint& q, const ConditionalModel& m) {
  if (!p.same_shape(q)) throw ContractError("bound: P and Q alphabet sizes differ");
  discrete::require_match(p, m, "bound");
  BoundTerms b;
  b.js_xv = discrete::js(p.visual_marginal(), q.visual_marginal());
  b.js_xt = discrete::js(p.text_marginal(), q.text_marginal());
  b.delta_p = discrete::js(discrete::model_response_marginal(p, m), p.response_marginal());
  b.delta_q = discrete::js(discrete::model_response_marginal(q, m), q.response_marginal());
  b.h_hat = h_hat(p, q, m);
  return b;
}

// E_{P_{X'}} js + E_{Q_{X'}} js over rows of an input conditional.
template <typename RowFn>
double dbar(const std::vector<double>& pw, const std::vector<double>& qw, RowFn&& rows) {
  double s = 0.0;
  for (std::size_t i = 0; i < pw.size(); ++i) {
    if (pw[i] <= 0.0 && qw[i] <= 0.0) continue;
    const auto [a, b] = rows(i);
    const double d = discrete::js(a, b);
    s += (pw[i] + qw[i]) * d;
  }
  return s;
}

}  // namespace detail

inline BoundTerms theorem2_bound(const DiscreteJoint& p, const DiscreteJoint& q, const ConditionalModel& m,
                                 Consistency mode = Consistency::full) {
  if (mode == Consistency::none) throw ContractError("theorem2_bound: a consistency requirement is needed");
  require_consistency(p, q, mode, "theorem2_bound");
  auto b = detail::common_terms(p, q, m);
  b.variant = BoundVariant::simplified;
  b.consistency = mode;
  b.rhs_total = b.recompute();
  return b;
}

inline BoundTerms theorem3_bound(const DiscreteJoint& p, const DiscreteJoint& q, const ConditionalModel& m) {
  auto b = detail::common_terms(p, q, m);
  b.variant = BoundVariant::general;
  b.consistency = Consistency::none;
  b.js_cond_t_given_v = detail::dbar(p.visual_marginal(), q.visual_marginal(), [&](std::size_t v) {
    return std::pair{p.text_given_visual(v), q.text_given_visual(v)};
  });
  b.js_cond_v_given_t = detail::dbar(p.text_marginal(), q.text_marginal(), [&](std::size_t t) {
    return std::pair{p.visual_given_text(t), q.visual_given_text(t)};
  });
  const auto px = p.input_marginal();
  double s = 0.0;
  for (std::size_t x = 0; x < p.nx(); ++x) {
    if (px[x] <= 0.0) continue;
    s += px[x] * std::pow(discrete::js(p.response_row(x), q.response_row(x)), 0.25);
  }
  b.js_y_given_x_term = s;
  b.rhs_total = b.recompute();
  return b;
}

inline BoundTerms corollary_tv_bound(const DiscreteJoint& p, const DiscreteJoint& q, const ConditionalModel& m,
                                     Consistency mode = Consistency::full) {
  if (mode == Consistency::none) throw ContractError("corollary_tv_bound: a consistency requirement is needed");
  require_consistency(p, q, mode, "corollary_tv_bound");
  auto b = detail::common_terms(p, q, m);
  b.variant = BoundVariant::corollary_tv;
  b.consistency = mode;
  auto expected_tv = [&](const DiscreteJoint& j) {
    const auto in = j.input_marginal();
    double s = 0.0;
    for (std::size_t x = 0; x < j.nx(); ++x)
      if (in[x] > 0.0) s += in[x] * discrete::tv(j.response_row(x), m.row(x));
    return s;
  };
  b.tv_p = expected_tv(p);
  b.tv_q = expected_tv(q);
  b.rhs_total = b.recompute();
  return b;
}

inline BoundTerms partial_bound_terms(const DiscreteJoint& p, const DiscreteJoint& q, const ConditionalModel& m,
                                      Consistency mode = Consistency::full) {
  auto b = theorem2_bound(p, q, m, mode);
  b.variant = BoundVariant::partial;
  b.rhs_total = b.recompute();
  return b;
}

inline double partial_bound(const DiscreteJoint& p, const DiscreteJoint& q, const ConditionalModel& m,
                            Consistency mode = Consistency::full) {
  return partial_bound_terms(p, q, m, mode).rhs_total;
}

}  // namespace emid::metrics
