#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "emid/error.hpp"
#include "emid/estimators/config.hpp"
#include "emid/estimators/sample_batch.hpp"
#include "emid/numkit/adamw.hpp"
#include "emid/numkit/mlp.hpp"
#include "emid/numkit/rng.hpp"

namespace emid::estimators {

/// CLUB with a diagonal Gaussian q(y | x) = N(mean_net(x), exp(logvar_net(x))).
struct ClubEstimator {
  numkit::Mlp2 mean_net;
  numkit::Mlp2 logvar_net;
  numkit::AdamWState mean_opt;
  numkit::AdamWState logvar_opt;
  double logvar_clamp = 10.0;
  std::vector<double> loglik_trace;  // mean training log q per iteration

  std::size_t dx() const { return mean_net.in_dim(); }
  std::size_t dy() const { return mean_net.out_dim(); }
};

inline ClubEstimator club_init(std::size_t dx, std::size_t dy, const EstimatorConfig& cfg) {
  cfg.validate();
  auto rng = numkit::Rng(cfg.seed).child("club-init");
  auto mean = numkit::Mlp2::random(dx, cfg.hidden, dy, rng);
  auto logvar = numkit::Mlp2::random(dx, cfg.hidden, dy, rng);
  const numkit::AdamWConfig opt{cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay};
  const auto nm = mean.params().size(), nl = logvar.params().size();
  return ClubEstimator{std::move(mean), std::move(logvar), numkit::AdamWState(nm, opt), numkit::AdamWState(nl, opt),
                       cfg.logvar_clamp, {}};
}

namespace detail {
inline double clamp_logvar(double raw, double c) { return std::clamp(raw, -c, c); }
}  // namespace detail

/// Mean log q(y_i | x_i) over a batch.
inline double club_loglik(const ClubEstimator& est, const SampleBatch& b) {
  const auto mu = est.mean_net.forward_batch(b.x(), b.size()).output;
  const auto lv = est.logvar_net.forward_batch(b.x(), b.size()).output;
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double s = 0.0;
  const auto y = b.y();
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double l = detail::clamp_logvar(lv[k], est.logvar_clamp), d = y[k] - mu[k];
    s += -0.5 * d * d * std::exp(-l) - 0.5 * l - half_log_2pi;
  }
  return s / static_cast<double>(b.size());
}

/// One AdamW step on the negative mean log-likelihood of `b`; returns the
/// mean log-likelihood before the step.
inline double club_step(ClubEstimator& est, const SampleBatch& b) {
  const std::size_t n = b.size(), dy = est.dy();
  const auto mc = est.mean_net.forward_batch(b.x(), n);
  const auto lc = est.logvar_net.forward_batch(b.x(), n);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> gmu(n * dy), glv(n * dy);
  double ll = 0.0;
  const auto y = b.y();
  for (std::size_t k = 0; k < n * dy; ++k) {
    const double raw = lc.output[k];
    const double l = detail::clamp_logvar(raw, est.logvar_clamp);
    const double d = y[k] - mc.output[k], prec = std::exp(-l);
    ll += -0.5 * d * d * prec - 0.5 * l - half_log_2pi;
    gmu[k] = -d * prec * inv_n;
    glv[k] = (raw == l) ? 0.5 * (1.0 - d * d * prec) * inv_n : 0.0;
  }
  ll *= inv_n;
  const auto g1 = est.mean_net.backward(mc, gmu);
  const auto g2 = est.logvar_net.backward(lc, glv);
  const auto& mnet = est.mean_net;
  const auto& lnet = est.logvar_net;
  est.mean_opt.step(est.mean_net.params(), g1, [&](std::size_t i) { return "mean." + mnet.param_block(i); });
  est.logvar_opt.step(est.logvar_net.params(), g2, [&](std::size_t i) { return "logvar." + lnet.param_block(i); });
  return ll;
}

/// Maximizes sum log q(y|x) over minibatches of `pool` for cfg.iterations steps.
inline ClubEstimator club_train(const SampleBatch& pool, const EstimatorConfig& cfg) {
  auto est = club_init(pool.dx(), pool.dy(), cfg);
  MinibatchSource src(pool, cfg.batch, numkit::Rng(cfg.seed).child("club-batches"));
  est.loglik_trace.reserve(cfg.iterations);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    double ll = 0.0;
    try {
      ll = club_step(est, src.next());
    } catch (const NonFiniteError& e) {
      throw NonFiniteError("club_train: iteration " + std::to_string(it) + ": " + e.what());
    }
    if (!std::isfinite(ll)) throw NonFiniteError("club_train: non-finite loss at iteration " + std::to_string(it));
    est.loglik_trace.push_back(ll);
  }
  return est;
}

/// (1/N) sum_i log q(y_i|x_i) - (1/N^2) sum_i sum_j log q(y_j|x_i).
///
/// For a diagonal Gaussian the inner sum over j only needs the first two
/// moments of y, so this is O(N d) rather than O(N^2 d).
inline double club_estimate(const ClubEstimator& est, const SampleBatch& b) {
  if (b.dx() != est.dx() || b.dy() != est.dy()) throw ContractError("club_estimate: batch dimensions do not match");
  if (b.size() < 2) throw ContractError("club_estimate: need at least two pairs");
  const std::size_t n = b.size(), dy = b.dy();
  const auto mu = est.mean_net.forward_batch(b.x(), n).output;
  const auto lv = est.logvar_net.forward_batch(b.x(), n).output;
  std::vector<double> m1(dy, 0.0), m2(dy, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto yr = b.y_row(i);
    for (std::size_t d = 0; d < dy; ++d) m1[d] += yr[d], m2[d] += yr[d] * yr[d];
  }
  for (std::size_t d = 0; d < dy; ++d) m1[d] /= static_cast<double>(n), m2[d] /= static_cast<double>(n);
  // log-variance and normalizing terms cancel between the two means
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto yr = b.y_row(i);
    for (std::size_t d = 0; d < dy; ++d) {
      const std::size_t k = i * dy + d;
      const double prec = std::exp(-detail::clamp_logvar(lv[k], est.logvar_clamp));
      const double pos = (yr[d] - mu[k]) * (yr[d] - mu[k]);
      const double neg = m2[d] - 2.0 * mu[k] * m1[d] + mu[k] * mu[k];
      s += 0.5 * prec * (neg - pos);
    }
  }
  const double out = s / static_cast<double>(n);
  if (!std::isfinite(out)) throw NonFiniteError("club_estimate: non-finite estimate");
  return out;
}

/// CLUB on (query, model response) minus CLUB on (query, reference response),
/// one estimator for both.
inline double emi_estimate(const SampleBatch& model_pairs, const SampleBatch& reference_pairs, const ClubEstimator& est) {
  return club_estimate(est, model_pairs) - club_estimate(est, reference_pairs);
}

}  // namespace emid::estimators
