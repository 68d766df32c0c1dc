#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "emid/error.hpp"

namespace emid::discrete {

inline constexpr double kSumTolerance = 1e-9;

/// Throws InvalidDistribution unless `p` is entrywise non-negative, finite,
/// and sums to one within `tol`.
inline void validate_distribution(std::span<const double> p, double tol = kSumTolerance,
                                  const std::string& what = "distribution") {
  if (p.empty()) throw InvalidDistribution(what + ": empty");
  double s = 0.0;
  for (double v : p) {
    if (!std::isfinite(v) || v < 0.0) throw InvalidDistribution(what + ": negative or non-finite entry");
    s += v;
  }
  if (std::abs(s - 1.0) > tol) throw InvalidDistribution(what + ": entries sum to " + std::to_string(s));
}

inline std::vector<double> uniform_distribution(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

/// Exact joint distribution over (visual token, text token, response token).
///
/// Held as the input marginal P(x) and the response conditional P(y | x),
/// with x = v * nt + t; the nv x nt x ny tensor is their product. Keeping the
/// factors means two joints built on the same conditional share it bit for
/// bit, and inputs with zero mass still carry a valid response row (uniform
/// unless supplied).
class DiscreteJoint {
 public:
  static DiscreteJoint from_tensor(std::size_t nv, std::size_t nt, std::size_t ny, std::vector<double> p) {
    check_sizes(nv, nt, ny);
    if (p.size() != nv * nt * ny) throw ContractError("DiscreteJoint: tensor size does not match nv*nt*ny");
    validate_distribution(p, kSumTolerance, "DiscreteJoint");
    DiscreteJoint j(nv, nt, ny);
    const std::size_t nx = nv * nt;
    j.in_.assign(nx, 0.0);
    j.cond_.assign(nx * ny, 1.0 / static_cast<double>(ny));
    for (std::size_t x = 0; x < nx; ++x) {
      double mass = 0.0;
      for (std::size_t y = 0; y < ny; ++y) mass += p[x * ny + y];
      j.in_[x] = mass;
      if (mass > 0.0)
        for (std::size_t y = 0; y < ny; ++y) j.cond_[x * ny + y] = p[x * ny + y] / mass;
    }
    j.p_ = std::move(p);
    return j;
  }

  // As above, with explicit response rows for the zero-mass inputs.
  static DiscreteJoint from_tensor(std::size_t nv, std::size_t nt, std::size_t ny, std::vector<double> p,
                                   std::span<const double> fill) {
    if (fill.size() != nv * nt * ny) throw ContractError("DiscreteJoint: fill size does not match nv*nt*ny");
    DiscreteJoint j = from_tensor(nv, nt, ny, std::move(p));
    for (std::size_t x = 0; x < j.nx(); ++x) {
      if (j.in_[x] > 0.0) continue;
      validate_distribution(fill.subspan(x * ny, ny), kSumTolerance, "fill row");
      std::copy_n(fill.begin() + static_cast<std::ptrdiff_t>(x * ny), ny,
                  j.cond_.begin() + static_cast<std::ptrdiff_t>(x * ny));
    }
    return j;
  }

  /// P(x, y) = input(x) * conditional(y | x).
  static DiscreteJoint from_factors(std::size_t nv, std::size_t nt, std::size_t ny, std::span<const double> input,
                                    std::span<const double> conditional) {
    check_sizes(nv, nt, ny);
    const std::size_t nx = nv * nt;
    if (input.size() != nx || conditional.size() != nx * ny)
      throw ContractError("DiscreteJoint::from_factors: size mismatch");
    validate_distribution(input, kSumTolerance, "input marginal");
    for (std::size_t x = 0; x < nx; ++x)
      validate_distribution(conditional.subspan(x * ny, ny), kSumTolerance, "conditional row");
    DiscreteJoint j(nv, nt, ny);
    j.in_.assign(input.begin(), input.end());
    j.cond_.assign(conditional.begin(), conditional.end());
    j.p_.resize(nx * ny);
    for (std::size_t x = 0; x < nx; ++x)
      for (std::size_t y = 0; y < ny; ++y) j.p_[x * ny + y] = input[x] * conditional[x * ny + y];
    return j;
  }

  // All three stored arrays as written by a serializer. The tensor must agree
  // with input x conditional to 1e-15 per cell.
  static DiscreteJoint restore(std::size_t nv, std::size_t nt, std::size_t ny, std::vector<double> p,
                               std::span<const double> input, std::span<const double> conditional) {
    DiscreteJoint j = from_factors(nv, nt, ny, input, conditional);
    if (p.size() != j.size()) throw ContractError("DiscreteJoint::restore: tensor size mismatch");
    for (std::size_t i = 0; i < p.size(); ++i)
      if (!(std::abs(p[i] - j.p_[i]) <= 1e-15)) throw ContractError("DiscreteJoint::restore: tensor disagrees with factors");
    j.p_ = std::move(p);
    return j;
  }

  std::size_t nv() const noexcept { return nv_; }
  std::size_t nt() const noexcept { return nt_; }
  std::size_t ny() const noexcept { return ny_; }
  std::size_t nx() const noexcept { return nv_ * nt_; }
  std::size_t size() const noexcept { return p_.size(); }

  double operator()(std::size_t v, std::size_t t, std::size_t y) const { return p_[(v * nt_ + t) * ny_ + y]; }
  double at(std::size_t x, std::size_t y) const { return p_[x * ny_ + y]; }
  std::span<const double> tensor() const noexcept { return p_; }

  const std::vector<double>& input_marginal() const noexcept { return in_; }
  std::vector<double> visual_marginal() const {
    std::vector<double> m(nv_, 0.0);
    for (std::size_t v = 0; v < nv_; ++v)
      for (std::size_t t = 0; t < nt_; ++t) m[v] += in_[v * nt_ + t];
    return m;
  }
  std::vector<double> text_marginal() const {
    std::vector<double> m(nt_, 0.0);
    for (std::size_t v = 0; v < nv_; ++v)
      for (std::size_t t = 0; t < nt_; ++t) m[t] += in_[v * nt_ + t];
    return m;
  }
  std::vector<double> response_marginal() const {
    std::vector<double> m(ny_, 0.0);
    for (std::size_t x = 0; x < nx(); ++x)
      for (std::size_t y = 0; y < ny_; ++y) m[y] += p_[x * ny_ + y];
    return m;
  }

  /// P(Y | X = x).
  std::vector<double> response_row(std::size_t x) const {
    return std::vector<double>(cond_.begin() + static_cast<std::ptrdiff_t>(x * ny_),
                               cond_.begin() + static_cast<std::ptrdiff_t>((x + 1) * ny_));
  }
  /// Full nx x ny table of P(Y | X).
  const std::vector<double>& response_conditional() const noexcept { return cond_; }

  // Input conditionals. A zero-mass conditioning value yields the uniform row.
  std::vector<double> text_given_visual(std::size_t v) const {
    std::vector<double> row(nt_);
    double mass = 0.0;
    for (std::size_t t = 0; t < nt_; ++t) mass += in_[v * nt_ + t];
    if (mass <= 0.0) return uniform_distribution(nt_);
    for (std::size_t t = 0; t < nt_; ++t) row[t] = in_[v * nt_ + t] / mass;
    return row;
  }
  std::vector<double> visual_given_text(std::size_t t) const {
    std::vector<double> row(nv_);
    double mass = 0.0;
    for (std::size_t v = 0; v < nv_; ++v) mass += in_[v * nt_ + t];
    if (mass <= 0.0) return uniform_distribution(nv_);
    for (std::size_t v = 0; v < nv_; ++v) row[v] = in_[v * nt_ + t] / mass;
    return row;
  }

  bool same_shape(const DiscreteJoint& o) const { return nv_ == o.nv_ && nt_ == o.nt_ && ny_ == o.ny_; }
  bool operator==(const DiscreteJoint& o) const {
    return same_shape(o) && p_ == o.p_ && in_ == o.in_ && cond_ == o.cond_;
  }

 private:
  DiscreteJoint(std::size_t nv, std::size_t nt, std::size_t ny) : nv_(nv), nt_(nt), ny_(ny) {}

  static void check_sizes(std::size_t nv, std::size_t nt, std::size_t ny) {
    if (nv == 0 || nt == 0 || ny == 0) throw ContractError("DiscreteJoint: alphabet sizes must be positive");
  }

  std::size_t nv_, nt_, ny_;
  std::vector<double> p_;
  std::vector<double> in_;
  std::vector<double> cond_;
};

}  // namespace emid::discrete
