#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "emid/discrete/info.hpp"
#include "emid/error.hpp"
#include "emid/metrics/metrics.hpp"
#include "emid/numkit/rng.hpp"
#include "emid/synthgen/scene.hpp"

namespace emid::synthgen {

enum class ShiftKind { visual, text, joint, conditional };

inline std::string to_string(ShiftKind k) {
  switch (k) {
    case ShiftKind::visual: return "visual";
    case ShiftKind::text: return "text";
    case ShiftKind::joint: return "joint";
    case ShiftKind::conditional: return "conditional";
  }
  return "?";
}

inline ShiftKind shift_kind_from_string(const std::string& s) {
  if (s == "visual") return ShiftKind::visual;
  if (s == "text") return ShiftKind::text;
  if (s == "joint") return ShiftKind::joint;
  if (s == "conditional") return ShiftKind::conditional;
  throw ContractError("unknown shift kind '" + s + "'");
}

struct ShiftScenario {
  std::string id;
  ShiftKind kind = ShiftKind::visual;
  double severity = 0.0;
  DiscreteJoint p;
  DiscreteJoint q;
  std::uint64_t seed = 0;
  // The strongest consistency requirement the pair satisfies by construction.
  metrics::Consistency consistency = metrics::Consistency::full;
};

/// Which conditionals each kind keeps fixed.
///   visual: P(t|v), P(y|x) and the text marginal (P(v|t) moves)
///   text:   P(v|t), P(y|x) and the visual marginal
///   joint:  all three conditionals; both marginals move
///   conditional: inputs fixed, P(y|x) moves
inline metrics::Consistency consistency_of(ShiftKind k) {
  switch (k) {
    case ShiftKind::visual:
    case ShiftKind::text: return metrics::Consistency::single_modality;
    case ShiftKind::joint: return metrics::Consistency::full;
    case ShiftKind::conditional: return metrics::Consistency::none;
  }
  return metrics::Consistency::none;
}

/// Random endpoints of a shift. Drawn once per seed so that every severity
/// of a ladder moves along the same path.
struct ShiftTargets {
  std::vector<double> visual;    // per token, normalized within each scene
  std::vector<double> text;
  std::vector<double> weights;   // K
  std::vector<double> response;  // nv*nt*ny
};

inline ShiftTargets draw_targets(const SceneWorld& w, numkit::Rng& rng, double alpha = 1.0) {
  ShiftTargets t;
  t.visual.assign(w.nv, 0.0);
  t.text.assign(w.nt, 0.0);
  for (std::size_t k = 0; k < w.scenes; ++k) {
    w.set_members(t.visual, k, rng.dirichlet(w.members(w.visual, k).size(), alpha));
    w.set_members(t.text, k, rng.dirichlet(w.members(w.text, k).size(), alpha));
  }
  t.weights = rng.dirichlet(w.scenes, alpha);
  for (std::size_t x = 0; x < w.nv * w.nt; ++x) {
    const auto row = rng.dirichlet(w.ny, alpha);
    t.response.insert(t.response.end(), row.begin(), row.end());
  }
  return t;
}

/// The shifted world at `severity` along the path toward `targets`.
inline SceneWorld shifted_world(const SceneWorld& base, ShiftKind kind, double severity, const ShiftTargets& targets) {
  if (!(severity >= 0.0 && severity <= 1.0)) throw ContractError("severity must lie in [0, 1]");
  SceneWorld q = base;
  if (severity == 0.0) return q;
  switch (kind) {
    case ShiftKind::visual:
      if (base.nv <= base.scenes) throw ContractError("visual shift needs a scene with two or more visual tokens");
      for (std::size_t k = 0; k < base.scenes; ++k)
        q.set_members(q.visual, k,
                      geometric_interpolate(base.members(base.visual, k), base.members(targets.visual, k), severity));
      break;
    case ShiftKind::text:
      if (base.nt <= base.scenes) throw ContractError("text shift needs a scene with two or more text tokens");
      for (std::size_t k = 0; k < base.scenes; ++k)
        q.set_members(q.text, k,
                      geometric_interpolate(base.members(base.text, k), base.members(targets.text, k), severity));
      break;
    case ShiftKind::joint:
      if (base.scenes < 2) throw ContractError("joint shift needs at least two scenes");
      q.weights = geometric_interpolate(base.weights, targets.weights, severity);
      break;
    case ShiftKind::conditional: {
      const std::size_t ny = base.ny;
      for (std::size_t x = 0; x < base.nv * base.nt; ++x) {
        const auto row = geometric_interpolate(std::span<const double>(base.response).subspan(x * ny, ny),
                                               std::span<const double>(targets.response).subspan(x * ny, ny), severity);
        std::copy(row.begin(), row.end(), q.response.begin() + static_cast<std::ptrdiff_t>(x * ny));
      }
      break;
    }
  }
  return q;
}

inline ShiftScenario make_scenario(const SceneWorld& base, ShiftKind kind, double severity, const ShiftTargets& targets,
                                   std::uint64_t seed) {
  ShiftScenario sc{"", kind, severity, base.joint(), severity == 0.0 ? base.joint() : shifted_world(base, kind, severity, targets).joint(),
                   seed, consistency_of(kind)};
  sc.id = to_string(kind) + "-s" + std::to_string(seed) + "-" + std::to_string(severity);
  return sc;
}

/// Shifts the marginal(s) named by `kind` toward a random target drawn from
/// `rng`; the conditionals the kind promises to keep come out unchanged.
inline ShiftScenario make_consistent_pair(const SceneWorld& base, ShiftKind kind, double severity, numkit::Rng& rng) {
  if (kind == ShiftKind::conditional) throw ContractError("make_consistent_pair: use make_conditional_shift_pair");
  if (!(severity >= 0.0 && severity <= 1.0)) throw ContractError("make_consistent_pair: severity must lie in [0, 1]");
  const std::uint64_t seed = rng.next();
  numkit::Rng target_rng(seed);
  return make_scenario(base, kind, severity, draw_targets(base, target_rng), seed);
}

/// Overload for a plain joint; the input marginal must have scene structure.
inline ShiftScenario make_consistent_pair(const DiscreteJoint& base, std::size_t scenes, ShiftKind kind, double severity,
                                          numkit::Rng& rng) {
  const auto w = scene_from_joint(base, scenes);
  if (!w) throw ContractError("make_consistent_pair: base joint has no " + std::to_string(scenes) + "-scene structure");
  return make_consistent_pair(*w, kind, severity, rng);
}

inline ShiftScenario make_conditional_shift_pair(const SceneWorld& base, double severity, numkit::Rng& rng) {
  if (!(severity > 0.0 && severity <= 1.0))
    throw ContractError("make_conditional_shift_pair: severity must lie in (0, 1]; use make_consistent_pair for 0");
  const std::uint64_t seed = rng.next();
  numkit::Rng target_rng(seed);
  return make_scenario(base, ShiftKind::conditional, severity, draw_targets(base, target_rng), seed);
}

/// `levels` scenarios at severities i / levels, i = 1..levels, sharing the
/// base world and one set of targets.
inline std::vector<ShiftScenario> severity_ladder(const SceneWorld& base, ShiftKind kind, std::size_t levels,
                                                  std::uint64_t seed) {
  if (levels < 2) throw ContractError("severity_ladder: need at least 2 levels");
  numkit::Rng target_rng(seed);
  const auto targets = draw_targets(base, target_rng);
  std::vector<ShiftScenario> out;
  for (std::size_t i = 1; i <= levels; ++i) {
    const double s = static_cast<double>(i) / static_cast<double>(levels);
    auto sc = make_scenario(base, kind, s, targets, seed);
    sc.id = to_string(kind) + "-s" + std::to_string(seed) + "-L" + std::to_string(i) + "of" + std::to_string(levels);
    out.push_back(std::move(sc));
  }
  return out;
}

}  // namespace emid::synthgen
