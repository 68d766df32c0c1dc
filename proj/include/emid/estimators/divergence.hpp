#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "emid/error.hpp"
#include "emid/numkit/sym_eigen.hpp"

namespace emid::estimators {

// Sample sets are row-major arrays of `dim`-vectors.

inline constexpr double kEigenFloor = 1e-12;

/// -sum lambda log lambda over the eigenvalues of C, ignoring those below the floor.
inline double spectral_entropy(const numkit::SymMatrix& c) {
  const auto e = numkit::eig_sym(c);
  double s = 0.0;
  for (double l : e.values)
    if (l >= kEigenFloor) s -= l * std::log(l);
  return s;
}

/// (1/N) sum phi phi^T over unit-normalized rows.
inline numkit::SymMatrix normalized_covariance(std::span<const double> samples, std::size_t dim) {
  if (dim == 0 || samples.empty() || samples.size() % dim != 0) throw ContractError("rjsd: empty or ragged sample set");
  const std::size_t n = samples.size() / dim;
  numkit::SymMatrix c(dim);
  std::vector<double> phi(dim);
  std::vector<double> acc(dim * dim, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double norm = 0.0;
    for (std::size_t k = 0; k < dim; ++k) norm += samples[r * dim + k] * samples[r * dim + k];
    norm = std::sqrt(norm);
    if (!(norm > 0.0) || !std::isfinite(norm)) throw ContractError("rjsd: zero or non-finite feature vector");
    for (std::size_t k = 0; k < dim; ++k) phi[k] = samples[r * dim + k] / norm;
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = i; j < dim; ++j) acc[i * dim + j] += phi[i] * phi[j];
  }
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i; j < dim; ++j) c.set(i, j, acc[i * dim + j] / static_cast<double>(n));
  return c;
}

/// S((C_a + C_b) / 2) - (S(C_a) + S(C_b)) / 2.
inline double rjsd(std::span<const double> a, std::span<const double> b, std::size_t dim) {
  const auto ca = normalized_covariance(a, dim), cb = normalized_covariance(b, dim);
  numkit::SymMatrix mix(dim);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i; j < dim; ++j) mix.set(i, j, 0.5 * (ca(i, j) + cb(i, j)));
  return spectral_entropy(mix) - 0.5 * (spectral_entropy(ca) + spectral_entropy(cb));
}

namespace detail {
inline double sq_dist(const double* u, const double* v, std::size_t dim) {
  double s = 0.0;
  for (std::size_t k = 0; k < dim; ++k) s += (u[k] - v[k]) * (u[k] - v[k]);
  return s;
}
}  // namespace detail

/// Median pairwise Euclidean distance over the pooled sample, using at most
/// the first `cap` rows of each set.
inline double median_bandwidth(std::span<const double> a, std::span<const double> b, std::size_t dim,
                               std::size_t cap = 500) {
  std::vector<const double*> rows;
  for (std::size_t r = 0; r < std::min(cap, a.size() / dim); ++r) rows.push_back(a.data() + r * dim);
  for (std::size_t r = 0; r < std::min(cap, b.size() / dim); ++r) rows.push_back(b.data() + r * dim);
  std::vector<double> d;
  d.reserve(rows.size() * (rows.size() - 1) / 2);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j) d.push_back(std::sqrt(detail::sq_dist(rows[i], rows[j], dim)));
  if (d.empty()) throw ContractError("mmd: median heuristic needs at least two points");
  auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  return *mid;
}

/// Unbiased squared MMD with k(u, v) = exp(-|u - v|^2 / (2 sigma^2)).
/// No bandwidth means the median heuristic.
inline double mmd(std::span<const double> a, std::span<const double> b, std::size_t dim,
                  std::optional<double> bandwidth = std::nullopt) {
  if (dim == 0 || a.size() % dim != 0 || b.size() % dim != 0) throw ContractError("mmd: ragged sample set");
  const std::size_t m = a.size() / dim, n = b.size() / dim;
  if (m < 2 || n < 2) throw ContractError("mmd: each set needs at least two samples");
  const double sigma = bandwidth ? *bandwidth : median_bandwidth(a, b, dim);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ContractError("mmd: degenerate bandwidth");
  const double g = 1.0 / (2.0 * sigma * sigma);
  auto within = [&](std::span<const double> s, std::size_t cnt) {
    double t = 0.0;
    for (std::size_t i = 0; i < cnt; ++i)
      for (std::size_t j = i + 1; j < cnt; ++j) t += std::exp(-g * detail::sq_dist(s.data() + i * dim, s.data() + j * dim, dim));
    return 2.0 * t / (static_cast<double>(cnt) * static_cast<double>(cnt - 1));
  };
  double cross = 0.0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) cross += std::exp(-g * detail::sq_dist(a.data() + i * dim, b.data() + j * dim, dim));
  cross /= static_cast<double>(m) * static_cast<double>(n);
  return within(a, m) + within(b, n) - 2.0 * cross;
}

}  // namespace emid::estimators
