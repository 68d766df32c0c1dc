#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "emid/error.hpp"

namespace emid::numkit {

/// Dense symmetric matrix, row-major. Writes through set() keep both
/// triangles identical, so symmetry holds exactly by construction.
class SymMatrix {
 public:
  explicit SymMatrix(std::size_t dim) : dim_(dim), a_(dim * dim, 0.0) {
    if (dim == 0) throw ContractError("SymMatrix: dim must be >= 1");
  }

  static SymMatrix identity(std::size_t dim) {
    SymMatrix m(dim);
    for (std::size_t i = 0; i < dim; ++i) m.set(i, i, 1.0);
    return m;
  }

  // Builds from a full row-major array; rejects anything not exactly symmetric.
  static SymMatrix from_rows(std::size_t dim, const std::vector<double>& rows) {
    if (rows.size() != dim * dim) throw ContractError("SymMatrix::from_rows: size mismatch");
    SymMatrix m(dim);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) {
        if (rows[i * dim + j] != rows[j * dim + i])
          throw ContractError("SymMatrix::from_rows: input is not symmetric");
        m.a_[i * dim + j] = rows[i * dim + j];
      }
    return m;
  }

  std::size_t dim() const noexcept { return dim_; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * dim_ + j]; }
  void set(std::size_t i, std::size_t j, double v) {
    a_[i * dim_ + j] = v;
    a_[j * dim_ + i] = v;
  }
  void add(std::size_t i, std::size_t j, double v) {
    a_[i * dim_ + j] += v;
    if (i != j) a_[j * dim_ + i] += v;
  }
  double trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) t += a_[i * dim_ + i];
    return t;
  }
  const std::vector<double>& data() const noexcept { return a_; }

 private:
  std::size_t dim_;
  std::vector<double> a_;
};

struct EigenDecomposition {
  std::vector<double> values;   // descending
  std::vector<double> vectors;  // row-major dim x dim, column k pairs with values[k]
  std::size_t dim = 0;
  int sweeps = 0;

  double vector(std::size_t row, std::size_t col) const { return vectors[row * dim + col]; }
};

/// Cyclic Jacobi eigensolver.
///
/// Sweeps over all off-diagonal pairs with Rutishauser's stable rotation until
/// the off-diagonal Frobenius norm drops below dim * 1e-14 of the total norm,
/// or the sweep cap is reached, in which case NonConvergence carries the
/// residual.
inline EigenDecomposition eig_sym(const SymMatrix& m, int max_sweeps = 100) {
  const std::size_t n = m.dim();
  std::vector<double> a = m.data();
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a[i * n + j] * a[i * n + j];
    return std::sqrt(s);
  };
  double total = 0.0;
  for (double x : a) total += x * x;
  total = std::sqrt(total);
  const double target = static_cast<double>(n) * 1e-14 * std::max(total, 1e-300);

  int sweep = 0;
  for (; sweep < max_sweeps; ++sweep) {
    if (off_norm() <= target) break;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (apq == 0.0) continue;
        const double app = a[p * n + p];
        const double aqq = a[q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double tau = s / (1.0 + c);

        a[p * n + p] = app - t * apq;
        a[q * n + q] = aqq + t * apq;
        a[p * n + q] = a[q * n + p] = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          if (r == p || r == q) continue;
          const double arp = a[r * n + p];
          const double arq = a[r * n + q];
          const double nrp = arp - s * (arq + tau * arp);
          const double nrq = arq + s * (arp - tau * arq);
          a[r * n + p] = a[p * n + r] = nrp;
          a[r * n + q] = a[q * n + r] = nrq;
        }
        for (std::size_t r = 0; r < n; ++r) {
          const double vrp = v[r * n + p];
          const double vrq = v[r * n + q];
          v[r * n + p] = vrp - s * (vrq + tau * vrp);
          v[r * n + q] = vrq + s * (vrp - tau * vrq);
        }
      }
    }
  }
  const double residual = off_norm();
  if (residual > target) throw NonConvergence("eig_sym: Jacobi did not converge", residual);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a[i * n + i] > a[j * n + j]; });

  EigenDecomposition out;
  out.dim = n;
  out.sweeps = sweep;
  out.values.resize(n);
  out.vectors.resize(n * n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a[order[k] * n + order[k]];
    for (std::size_t r = 0; r < n; ++r) out.vectors[r * n + k] = v[r * n + order[k]];
  }
  return out;
}

}  // namespace emid::numkit
