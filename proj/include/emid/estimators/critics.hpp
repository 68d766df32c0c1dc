#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "emid/error.hpp"
#include "emid/estimators/config.hpp"
#include "emid/estimators/sample_batch.hpp"
#include "emid/numkit/adamw.hpp"
#include "emid/numkit/mlp.hpp"
#include "emid/numkit/rng.hpp"

namespace emid::estimators {

// Variational lower bounds trained on a critic T(x, y) = Mlp2([x | y]).
enum class CriticBound { mine, nwj, infonce };

inline std::string to_string(CriticBound b) {
  switch (b) {
    case CriticBound::mine: return "mine";
    case CriticBound::nwj: return "nwj";
    case CriticBound::infonce: return "infonce";
  }
  return "?";
}

struct CriticResult {
  double value = 0.0;             // bound on the evaluation batch
  std::vector<double> trace;      // training objective per iteration
  numkit::Mlp2 critic{1, 1, 1};
};

namespace detail {

inline void append_pair(std::vector<double>& rows, std::span<const double> x, std::span<const double> y) {
  rows.insert(rows.end(), x.begin(), x.end());
  rows.insert(rows.end(), y.begin(), y.end());
}

inline double log_mean_exp(std::span<const double> t) {
  const double mx = *std::max_element(t.begin(), t.end());
  double s = 0.0;
  for (double v : t) s += std::exp(v - mx);
  return mx + std::log(s / static_cast<double>(t.size()));
}

// Scores T(x_i, y_j) for all i, j in a block, row-major.
inline std::vector<double> score_matrix(const numkit::Mlp2& net, const SampleBatch& b, std::span<const std::size_t> rows,
                                        numkit::Mlp2::Cache* cache = nullptr) {
  std::vector<double> in;
  in.reserve(rows.size() * rows.size() * (b.dx() + b.dy()));
  for (auto i : rows)
    for (auto j : rows) append_pair(in, b.x_row(i), b.y_row(j));
  auto c = net.forward_batch(in, rows.size() * rows.size());
  auto out = c.output;
  if (cache) *cache = std::move(c);
  return out;
}

// mean_i [S_ii - logsumexp_j S_ij] + log B
inline double infonce_block(std::span<const double> s, std::size_t b, std::vector<double>* grad = nullptr) {
  double total = 0.0;
  if (grad) grad->assign(b * b, 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    const auto row = s.subspan(i * b, b);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double lse = mx + std::log(z);
    total += row[i] - lse;
    if (grad)
      for (std::size_t j = 0; j < b; ++j)
        (*grad)[i * b + j] = (std::exp(row[j] - lse) - (i == j ? 1.0 : 0.0)) / static_cast<double>(b);
  }
  return total / static_cast<double>(b) + std::log(static_cast<double>(b));
}

inline double evaluate_bound(CriticBound kind, const numkit::Mlp2& net, const SampleBatch& eval, std::size_t nce_batch,
                             numkit::Rng& rng) {
  const std::size_t n = eval.size();
  if (kind == CriticBound::infonce) {
    const std::size_t b = std::min(nce_batch, n);
    std::vector<std::size_t> rows(b);
    double total = 0.0;
    std::size_t blocks = 0;
    for (std::size_t start = 0; start + b <= n; start += b, ++blocks) {
      std::iota(rows.begin(), rows.end(), start);
      total += infonce_block(score_matrix(net, eval, rows), b);
    }
    return std::min(total / static_cast<double>(blocks), std::log(static_cast<double>(b)));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(perm);
  std::vector<double> in;
  in.reserve(2 * n * (eval.dx() + eval.dy()));
  for (std::size_t i = 0; i < n; ++i) append_pair(in, eval.x_row(i), eval.y_row(i));
  for (std::size_t i = 0; i < n; ++i) append_pair(in, eval.x_row(i), eval.y_row(perm[i]));
  const auto t = net.forward_batch(in, 2 * n).output;
  const std::span<const double> pos(t.data(), n), neg(t.data() + n, n);
  const double mean_pos = std::accumulate(pos.begin(), pos.end(), 0.0) / static_cast<double>(n);
  if (kind == CriticBound::mine) return mean_pos - log_mean_exp(neg);
  double e = 0.0;
  for (double v : neg) e += std::exp(v - 1.0);
  return mean_pos - e / static_cast<double>(n);
}

}  // namespace detail

/// Trains a critic on `train` and reports its bound on `eval`.
///   mine:    E_P[T] - log E_{PxP}[e^T], gradient bias corrected with an EMA of
///            the partition term
///   nwj:     E_P[T] - e^-1 E_{PxP}[e^T]
///   infonce: contrastive bound over nce_batch x nce_batch score blocks, at
///            most log(nce_batch)
inline CriticResult critic_estimate(CriticBound kind, const SampleBatch& train, const SampleBatch& eval,
                                    const EstimatorConfig& cfg) {
  cfg.validate();
  if (train.dx() != eval.dx() || train.dy() != eval.dy()) throw ContractError("critic_estimate: dimension mismatch");
  if (eval.size() < 2) throw ContractError("critic_estimate: evaluation batch needs at least two pairs");
  const numkit::Rng root(cfg.seed);
  auto init_rng = root.child(to_string(kind) + "-init");
  CriticResult res;
  res.critic = numkit::Mlp2::random(train.dx() + train.dy(), cfg.hidden, 1, init_rng);
  auto& net = res.critic;
  numkit::AdamWState opt(net.params().size(), {cfg.lr, 0.9, 0.999, 1e-8, cfg.weight_decay});
  const std::size_t bsz = kind == CriticBound::infonce ? cfg.nce_batch : cfg.batch;
  MinibatchSource pos_src(train, bsz, root.child(to_string(kind) + "-pos"));
  MinibatchSource neg_src(train, bsz, root.child(to_string(kind) + "-neg"));
  const std::size_t b = pos_src.batch_size();
  double log_ema = 0.0;
  res.trace.reserve(cfg.iterations);

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const auto pi = pos_src.next_indices();
    std::vector<double> grad;
    double objective = 0.0;
    numkit::Mlp2::Cache cache;
    if (kind == CriticBound::infonce) {
      const auto s = detail::score_matrix(net, train, pi, &cache);
      objective = detail::infonce_block(s, b, &grad);
    } else {
      const auto ni = neg_src.next_indices();
      std::vector<double> in;
      in.reserve(2 * b * (train.dx() + train.dy()));
      for (std::size_t i = 0; i < b; ++i) detail::append_pair(in, train.x_row(pi[i]), train.y_row(pi[i]));
      for (std::size_t i = 0; i < b; ++i) detail::append_pair(in, train.x_row(pi[i]), train.y_row(ni[i]));
      cache = net.forward_batch(in, 2 * b);
      const auto& t = cache.output;
      grad.assign(2 * b, -1.0 / static_cast<double>(b));
      double mean_pos = 0.0;
      for (std::size_t i = 0; i < b; ++i) mean_pos += t[i];
      mean_pos /= static_cast<double>(b);
      const std::span<const double> neg(t.data() + b, b);
      if (kind == CriticBound::mine) {
        const double lme = detail::log_mean_exp(neg);
        if (it == 0)
          log_ema = lme;
        else {
          const double a = std::log(cfg.ema_decay) + log_ema, c = std::log1p(-cfg.ema_decay) + lme;
          const double mx = std::max(a, c);
          log_ema = mx + std::log(std::exp(a - mx) + std::exp(c - mx));
        }
        for (std::size_t i = 0; i < b; ++i)
          grad[b + i] = std::exp(neg[i] - log_ema) / static_cast<double>(b);
        objective = mean_pos - lme;
      } else {
        double e = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
          const double w = std::exp(neg[i] - 1.0);
          e += w;
          grad[b + i] = w / static_cast<double>(b);
        }
        objective = mean_pos - e / static_cast<double>(b);
      }
    }
    if (!std::isfinite(objective))
      throw NonFiniteError(to_string(kind) + ": non-finite objective at iteration " + std::to_string(it));
    res.trace.push_back(objective);
    const auto g = net.backward(cache, grad);
    try {
      opt.step(net.params(), g, [&](std::size_t i) { return net.param_block(i); });
    } catch (const NonFiniteError& e) {
      throw NonFiniteError(to_string(kind) + ": iteration " + std::to_string(it) + ": " + e.what());
    }
  }
  auto eval_rng = root.child(to_string(kind) + "-eval");
  res.value = detail::evaluate_bound(kind, net, eval, cfg.nce_batch, eval_rng);
  if (!std::isfinite(res.value)) throw NonFiniteError(to_string(kind) + ": non-finite estimate");
  return res;
}

inline double mine_estimate(const SampleBatch& train, const SampleBatch& eval, const EstimatorConfig& cfg) {
  return critic_estimate(CriticBound::mine, train, eval, cfg).value;
}
inline double nwj_estimate(const SampleBatch& train, const SampleBatch& eval, const EstimatorConfig& cfg) {
  return critic_estimate(CriticBound::nwj, train, eval, cfg).value;
}
inline double infonce_estimate(const SampleBatch& train, const SampleBatch& eval, const EstimatorConfig& cfg) {
  return critic_estimate(CriticBound::infonce, train, eval, cfg).value;
}

}  // namespace emid::estimators
