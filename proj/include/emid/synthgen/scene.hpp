#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "emid/discrete/joint.hpp"
#include "emid/error.hpp"
#include "emid/numkit/rng.hpp"

namespace emid::synthgen {

using discrete::DiscreteJoint;

/// q proportional to p^(1-s) * target^s. Zeros of p stay zero.
inline std::vector<double> geometric_interpolate(std::span<const double> p, std::span<const double> target, double s) {
  if (p.size() != target.size()) throw ContractError("geometric_interpolate: length mismatch");
  std::vector<double> q(p.size());
  if (s == 0.0) {
    q.assign(p.begin(), p.end());
    return q;
  }
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    q[i] = p[i] > 0.0 ? std::exp((1.0 - s) * std::log(p[i]) + s * std::log(target[i])) : 0.0;
    z += q[i];
  }
  if (!(z > 0.0)) throw ContractError("geometric_interpolate: target has no mass on the support of p");
  for (auto& v : q) v /= z;
  return q;
}

/// Input world made of K scenes. Visual token v belongs to scene v mod K and
/// text token t to scene t mod K. Inside scene k the two tokens are drawn
/// independently, so
///
///   P(v, t) = sum_k w_k * a_k(v) * b_k(t)
///
/// and pairs from different scenes never co-occur. Every input, including
/// those that never co-occur, has a full-support response row P(y | v, t).
///
/// The point of the construction: moving the scene weights w keeps P(t|v),
/// P(v|t) and P(y|x) fixed while both modality marginals move; moving a
/// scene's visual distribution a_k keeps P(t|v), P(y|x) and the text
/// marginal fixed.
struct SceneWorld {
  std::size_t nv = 0, nt = 0, ny = 0, scenes = 1;
  std::vector<double> weights;   // K
  std::vector<double> visual;    // nv, each scene's members sum to 1
  std::vector<double> text;      // nt, each scene's members sum to 1
  std::vector<double> response;  // nv*nt*ny, rows sum to 1

  std::size_t scene_of_visual(std::size_t v) const { return v % scenes; }
  std::size_t scene_of_text(std::size_t t) const { return t % scenes; }

  void validate() const {
    if (nv == 0 || nt == 0 || ny == 0) throw ContractError("SceneWorld: alphabet sizes must be positive");
    if (scenes == 0 || scenes > std::min(nv, nt)) throw ContractError("SceneWorld: need 1 <= scenes <= min(nv, nt)");
    if (weights.size() != scenes || visual.size() != nv || text.size() != nt || response.size() != nv * nt * ny)
      throw ContractError("SceneWorld: component sizes do not match alphabets");
    discrete::validate_distribution(weights, discrete::kSumTolerance, "scene weights");
    for (std::size_t k = 0; k < scenes; ++k) {
      discrete::validate_distribution(members(visual, k), discrete::kSumTolerance, "scene visual distribution");
      discrete::validate_distribution(members(text, k), discrete::kSumTolerance, "scene text distribution");
    }
    for (std::size_t x = 0; x < nv * nt; ++x)
      discrete::validate_distribution(std::span<const double>(response).subspan(x * ny, ny), discrete::kSumTolerance,
                                      "response row");
  }

  // Entries of `per_token` belonging to scene k, in token order.
  std::vector<double> members(const std::vector<double>& per_token, std::size_t k) const {
    std::vector<double> out;
    for (std::size_t i = k; i < per_token.size(); i += scenes) out.push_back(per_token[i]);
    return out;
  }
  void set_members(std::vector<double>& per_token, std::size_t k, const std::vector<double>& vals) const {
    std::size_t j = 0;
    for (std::size_t i = k; i < per_token.size(); i += scenes) per_token[i] = vals[j++];
  }

  std::vector<double> input_marginal() const {
    std::vector<double> in(nv * nt, 0.0);
    for (std::size_t v = 0; v < nv; ++v)
      for (std::size_t t = 0; t < nt; ++t)
        if (scene_of_visual(v) == scene_of_text(t)) in[v * nt + t] = weights[scene_of_visual(v)] * visual[v] * text[t];
    return in;
  }

  DiscreteJoint joint() const {
    validate();
    return DiscreteJoint::from_factors(nv, nt, ny, input_marginal(), response);
  }

  static SceneWorld random(std::size_t nv, std::size_t nt, std::size_t ny, std::size_t scenes, numkit::Rng& rng,
                           double alpha = 1.0) {
    SceneWorld w;
    w.nv = nv;
    w.nt = nt;
    w.ny = ny;
    w.scenes = scenes;
    if (scenes == 0 || scenes > std::min(nv, nt)) throw ContractError("SceneWorld::random: need 1 <= scenes <= min(nv, nt)");
    w.weights = rng.dirichlet(scenes, alpha);
    w.visual.assign(nv, 0.0);
    w.text.assign(nt, 0.0);
    for (std::size_t k = 0; k < scenes; ++k) {
      w.set_members(w.visual, k, rng.dirichlet(w.members(w.visual, k).size(), alpha));
      w.set_members(w.text, k, rng.dirichlet(w.members(w.text, k).size(), alpha));
    }
    w.response.clear();
    for (std::size_t x = 0; x < nv * nt; ++x) {
      const auto row = rng.dirichlet(ny, alpha);
      w.response.insert(w.response.end(), row.begin(), row.end());
    }
    return w;
  }
};

/// Recovers a scene structure from a joint whose input marginal has the
/// scene form for `scenes` blocks (every block a product of its marginals).
/// Returns nullopt when the joint does not factor that way within `tol`.
inline std::optional<SceneWorld> scene_from_joint(const DiscreteJoint& j, std::size_t scenes, double tol = 1e-12) {
  if (scenes == 0 || scenes > std::min(j.nv(), j.nt())) return std::nullopt;
  SceneWorld w;
  w.nv = j.nv();
  w.nt = j.nt();
  w.ny = j.ny();
  w.scenes = scenes;
  w.weights.assign(scenes, 0.0);
  w.visual.assign(j.nv(), 0.0);
  w.text.assign(j.nt(), 0.0);
  const auto in = j.input_marginal();
  for (std::size_t v = 0; v < j.nv(); ++v)
    for (std::size_t t = 0; t < j.nt(); ++t) {
      const double m = in[v * j.nt() + t];
      if (v % scenes != t % scenes) {
        if (m > tol) return std::nullopt;
        continue;
      }
      w.weights[v % scenes] += m;
      w.visual[v] += m;
      w.text[t] += m;
    }
  for (std::size_t k = 0; k < scenes; ++k) {
    if (!(w.weights[k] > 0.0)) return std::nullopt;
    for (std::size_t v = k; v < j.nv(); v += scenes) w.visual[v] /= w.weights[k];
    for (std::size_t t = k; t < j.nt(); t += scenes) w.text[t] /= w.weights[k];
  }
  for (std::size_t v = 0; v < j.nv(); ++v)
    for (std::size_t t = 0; t < j.nt(); ++t) {
      if (v % scenes != t % scenes) continue;
      const double expect = w.weights[v % scenes] * w.visual[v] * w.text[t];
      if (std::abs(expect - in[v * j.nt() + t]) > tol) return std::nullopt;
    }
  w.response = j.response_conditional();
  return w;
}

}  // namespace emid::synthgen
