#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "emid/discrete/joint.hpp"
#include "emid/error.hpp"

namespace emid::discrete {

namespace detail {
inline void check_lengths(std::span<const double> p, std::span<const double> q, const char* what) {
  if (p.size() != q.size()) throw ContractError(std::string(what) + ": length mismatch");
}
inline double xlogx(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }
}  // namespace detail

/// Shannon entropy in nats, 0 log 0 = 0.
inline double entropy(std::span<const double> p) {
  validate_distribution(p, kSumTolerance, "entropy");
  double h = 0.0;
  for (double v : p) h -= detail::xlogx(v);
  return std::max(h, 0.0);
}

/// KL divergence. `infinite` is set when p puts mass where q has none; in
/// that case `value` is meaningless and callers are expected to branch.
struct KlValue {
  double value = 0.0;
  bool infinite = false;

  explicit operator bool() const noexcept { return !infinite; }
  double finite_or_throw() const {
    if (infinite) throw PreconditionError("KL divergence is infinite (support mismatch)");
    return value;
  }
};

inline KlValue kl(std::span<const double> p, std::span<const double> q) {
  detail::check_lengths(p, q, "kl");
  validate_distribution(p, kSumTolerance, "kl: p");
  validate_distribution(q, kSumTolerance, "kl: q");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return {std::numeric_limits<double>::infinity(), true};
    s += p[i] * std::log(p[i] / q[i]);
  }
  return {std::max(s, 0.0), false};
}

inline double js(std::span<const double> p, std::span<const double> q) {
  detail::check_lengths(p, q, "js");
  validate_distribution(p, kSumTolerance, "js: p");
  validate_distribution(q, kSumTolerance, "js: q");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    const double a = p[i] > 0.0 ? p[i] * std::log(p[i] / m) : 0.0;
    const double b = q[i] > 0.0 ? q[i] * std::log(q[i] / m) : 0.0;
    s += 0.5 * (a + b);  // symmetric bitwise
  }
  return std::clamp(s, 0.0, std::log(2.0));
}

// Unnormalized: sum |p - q|, so the range is [0, 2].
inline double tv(std::span<const double> p, std::span<const double> q) {
  detail::check_lengths(p, q, "tv");
  validate_distribution(p, kSumTolerance, "tv: p");
  validate_distribution(q, kSumTolerance, "tv: q");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return s;
}

/// I(A;B) of a rows x cols joint table, as H(B) - E_a H(B | A = a).
inline double mi_table(std::span<const double> table, std::size_t rows, std::size_t cols) {
  if (table.size() != rows * cols) throw ContractError("mi_table: shape mismatch");
  std::vector<double> col_m(cols, 0.0);
  double cond = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    double mass = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      mass += table[r * cols + c];
      col_m[c] += table[r * cols + c];
    }
    if (mass <= 0.0) continue;
    for (std::size_t c = 0; c < cols; ++c) cond -= mass * detail::xlogx(table[r * cols + c] / mass);
  }
  double hb = 0.0;
  for (double v : col_m) hb -= detail::xlogx(v);
  return std::max(hb - cond, 0.0);
}

/// Which variables of (X_v, X_t, Y) play the roles in I(A; B).
enum class Grouping {
  input_response,         // I(X_v X_t ; Y)
  visual_response,        // I(X_v ; Y)
  text_response,          // I(X_t ; Y)
  text_response_given_v,  // I(X_t ; Y | X_v)
  visual_response_given_t,
  visual_text,            // I(X_v ; X_t)
};

inline std::string to_string(Grouping g) {
  switch (g) {
    case Grouping::input_response: return "input_response";
    case Grouping::visual_response: return "visual_response";
    case Grouping::text_response: return "text_response";
    case Grouping::text_response_given_v: return "text_response_given_v";
    case Grouping::visual_response_given_t: return "visual_response_given_t";
    case Grouping::visual_text: return "visual_text";
  }
  throw ContractError("unknown grouping");
}

inline double mutual_information(const DiscreteJoint& j, Grouping g = Grouping::input_response) {
  const std::size_t nv = j.nv(), nt = j.nt(), ny = j.ny();
  const auto p = j.tensor();
  switch (g) {
    case Grouping::input_response:
      return mi_table(p, nv * nt, ny);
    case Grouping::visual_response: {
      std::vector<double> t(nv * ny, 0.0);
      for (std::size_t v = 0; v < nv; ++v)
        for (std::size_t k = 0; k < nt; ++k)
          for (std::size_t y = 0; y < ny; ++y) t[v * ny + y] += j(v, k, y);
      return mi_table(t, nv, ny);
    }
    case Grouping::text_response: {
      std::vector<double> t(nt * ny, 0.0);
      for (std::size_t v = 0; v < nv; ++v)
        for (std::size_t k = 0; k < nt; ++k)
          for (std::size_t y = 0; y < ny; ++y) t[k * ny + y] += j(v, k, y);
      return mi_table(t, nt, ny);
    }
    case Grouping::text_response_given_v: {
      // sum_v P(v) I(X_t ; Y | X_v = v); the slice is already P(v) times a joint.
      double s = 0.0;
      for (std::size_t v = 0; v < nv; ++v) {
        std::span<const double> slice = p.subspan(v * nt * ny, nt * ny);
        double mass = 0.0;
        for (double x : slice) mass += x;
        if (mass <= 0.0) continue;
        std::vector<double> norm(slice.begin(), slice.end());
        for (auto& x : norm) x /= mass;
        s += mass * mi_table(norm, nt, ny);
      }
      return s;
    }
    case Grouping::visual_response_given_t: {
      double s = 0.0;
      for (std::size_t k = 0; k < nt; ++k) {
        std::vector<double> slice(nv * ny);
        double mass = 0.0;
        for (std::size_t v = 0; v < nv; ++v)
          for (std::size_t y = 0; y < ny; ++y) {
            slice[v * ny + y] = j(v, k, y);
            mass += j(v, k, y);
          }
        if (mass <= 0.0) continue;
        for (auto& x : slice) x /= mass;
        s += mass * mi_table(slice, nv, ny);
      }
      return s;
    }
    case Grouping::visual_text:
      return mi_table(j.input_marginal(), nv, nt);
  }
  throw ContractError("mutual_information: invalid grouping");
}

struct InfoReport {
  double h_y = 0.0;          // H(P_Y)
  double h_y_given_x = 0.0;  // E_x H(P_{Y|X=x})
  double mi_xy = 0.0;
  double mi_vy = 0.0;
  double mi_ty_given_v = 0.0;
  double mi_ty = 0.0;
};

inline InfoReport info_report(const DiscreteJoint& j) {
  InfoReport r;
  r.h_y = entropy(j.response_marginal());
  const auto in = j.input_marginal();
  for (std::size_t x = 0; x < j.nx(); ++x)
    if (in[x] > 0.0) r.h_y_given_x += in[x] * entropy(j.response_row(x));
  r.mi_xy = mutual_information(j, Grouping::input_response);
  r.mi_vy = mutual_information(j, Grouping::visual_response);
  r.mi_ty_given_v = mutual_information(j, Grouping::text_response_given_v);
  r.mi_ty = mutual_information(j, Grouping::text_response);
  return r;
}

}  // namespace emid::discrete
