#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "emid/discrete/joint.hpp"
#include "emid/error.hpp"
#include "emid/estimators/sample_batch.hpp"
#include "emid/numkit/rng.hpp"

namespace emid::synthgen {

struct TokenTriple {
  std::size_t v = 0, t = 0, y = 0;
  bool operator==(const TokenTriple&) const = default;
};

/// i.i.d. draws by inverse CDF over the flattened tensor.
inline std::vector<TokenTriple> sample_discrete(const discrete::DiscreteJoint& j, std::size_t n, numkit::Rng& rng) {
  if (n == 0) throw ContractError("sample_discrete: n must be >= 1");
  const auto p = j.tensor();
  std::vector<double> cdf(p.size());
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    cdf[i] = acc;
    if (p[i] > 0.0) last = i;
  }
  std::vector<TokenTriple> out(n);
  const std::size_t ny = j.ny(), nt = j.nt();
  for (auto& s : out) {
    const double u = rng.uniform() * acc;
    auto idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    idx = std::min(idx, last);
    s.y = idx % ny;
    s.t = (idx / ny) % nt;
    s.v = idx / (ny * nt);
  }
  return out;
}

/// One-hot features: x = [onehot(v) | onehot(t)], y = onehot(y).
inline estimators::SampleBatch one_hot_batch(const discrete::DiscreteJoint& j, const std::vector<TokenTriple>& draws) {
  const std::size_t dx = j.nv() + j.nt(), dy = j.ny();
  std::vector<double> x(draws.size() * dx, 0.0), y(draws.size() * dy, 0.0);
  for (std::size_t i = 0; i < draws.size(); ++i) {
    x[i * dx + draws[i].v] = 1.0;
    x[i * dx + j.nv() + draws[i].t] = 1.0;
    y[i * dy + draws[i].y] = 1.0;
  }
  return estimators::SampleBatch(dx, dy, std::move(x), std::move(y));
}

/// Correlated Gaussian pairs: per dimension, (x_i, y_i) is standard bivariate
/// normal with correlation rho; x additionally carries `mean_shift`.
struct GaussianWorld {
  double rho_ref = 0.8;
  double rho_model = 0.3;
  std::size_t d = 1;
  double mean_shift = 0.0;

  void validate() const {
    if (!(std::abs(rho_ref) < 1.0) || !(std::abs(rho_model) < 1.0)) throw ContractError("GaussianWorld: |rho| must be < 1");
    if (d == 0) throw ContractError("GaussianWorld: d must be positive");
  }
};

inline double gaussian_mi(double rho, std::size_t d = 1) {
  if (!(std::abs(rho) < 1.0)) throw ContractError("gaussian_mi: |rho| must be < 1");
  return -0.5 * static_cast<double>(d) * std::log1p(-rho * rho);
}

inline estimators::SampleBatch sample_gaussian_pairs(std::size_t d, double rho, double mean_shift, std::size_t n,
                                                     numkit::Rng& rng) {
  if (n < 2) throw ContractError("sample_gaussian_pairs: n must be >= 2");
  if (!(std::abs(rho) < 1.0)) throw ContractError("sample_gaussian_pairs: |rho| must be < 1");
  // Cholesky of [[1, rho], [rho, 1]]: y = rho * x + sqrt(1 - rho^2) * z
  const double c = std::sqrt(1.0 - rho * rho);
  std::vector<double> x(n * d), y(n * d);
  for (std::size_t i = 0; i < n * d; ++i) {
    const double a = rng.normal(), b = rng.normal();
    x[i] = a + mean_shift;
    y[i] = rho * a + c * b;
  }
  return estimators::SampleBatch(d, d, std::move(x), std::move(y));
}

inline estimators::SampleBatch sample_gaussian_pairs(const GaussianWorld& w, std::size_t n, numkit::Rng& rng,
                                                     bool model_side = false) {
  w.validate();
  return sample_gaussian_pairs(w.d, model_side ? w.rho_model : w.rho_ref, w.mean_shift, n, rng);
}

/// Shared queries with two responses: the reference (rho_ref) and the model's
/// (rho_model).
struct ResponsePairs {
  estimators::SampleBatch model;
  estimators::SampleBatch reference;
  double analytic_emi = 0.0;  // I_model - I_ref
};

inline ResponsePairs sample_response_pairs(const GaussianWorld& w, std::size_t n, numkit::Rng& rng) {
  w.validate();
  if (n < 2) throw ContractError("sample_response_pairs: n must be >= 2");
  const std::size_t d = w.d;
  const double cm = std::sqrt(1.0 - w.rho_model * w.rho_model), cr = std::sqrt(1.0 - w.rho_ref * w.rho_ref);
  std::vector<double> x(n * d), ym(n * d), yr(n * d);
  for (std::size_t i = 0; i < n * d; ++i) {
    const double a = rng.normal(), b = rng.normal(), c = rng.normal();
    x[i] = a + w.mean_shift;
    ym[i] = w.rho_model * a + cm * b;
    yr[i] = w.rho_ref * a + cr * c;
  }
  return {estimators::SampleBatch(d, d, x, std::move(ym)), estimators::SampleBatch(d, d, std::move(x), std::move(yr)),
          gaussian_mi(w.rho_model, d) - gaussian_mi(w.rho_ref, d)};
}

}  // namespace emid::synthgen
