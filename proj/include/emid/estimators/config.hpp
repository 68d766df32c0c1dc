#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "emid/error.hpp"
#include "emid/estimators/sample_batch.hpp"
#include "emid/numkit/rng.hpp"

namespace emid::estimators {

struct EstimatorConfig {
  std::size_t hidden = 250;
  double lr = 1e-3;
  std::size_t batch = 1024;
  std::size_t iterations = 5000;
  std::uint64_t seed = 0;
  double weight_decay = 0.01;
  double logvar_clamp = 10.0;
  double ema_decay = 0.99;     // MINE
  std::size_t nce_batch = 128; // InfoNCE scores batch^2 pairs per step

  void validate() const {
    if (hidden == 0 || batch == 0 || nce_batch < 2) throw ContractError("EstimatorConfig: sizes must be positive");
    if (!(lr > 0.0) || !(weight_decay >= 0.0) || !(logvar_clamp > 0.0))
      throw ContractError("EstimatorConfig: lr and logvar_clamp must be positive");
    if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw ContractError("EstimatorConfig: ema_decay must lie in (0, 1)");
  }
};

/// Draws minibatches from a fixed pool without replacement, reshuffling the
/// pool order each epoch. A batch at least as large as the pool is the pool.
class MinibatchSource {
 public:
  MinibatchSource(const SampleBatch& pool, std::size_t batch, numkit::Rng rng)
      : pool_(pool), batch_(std::min(batch, pool.size())), rng_(rng), order_(pool.size()) {
    if (pool.empty()) throw ContractError("MinibatchSource: empty pool");
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(order_);
  }

  std::size_t batch_size() const noexcept { return batch_; }

  // Row indices into the pool for the next batch.
  std::vector<std::size_t> next_indices() {
    std::vector<std::size_t> out;
    out.reserve(batch_);
    while (out.size() < batch_) {
      if (cursor_ == order_.size()) {
        rng_.shuffle(order_);
        cursor_ = 0;
      }
      out.push_back(order_[cursor_++]);
    }
    return out;
  }

  SampleBatch next() {
    const auto idx = next_indices();
    return pool_.subset(idx);
  }

  numkit::Rng& rng() noexcept { return rng_; }

 private:
  const SampleBatch& pool_;
  std::size_t batch_;
  numkit::Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Least-squares slope of `trace` over its final `fraction` and the slope's
/// standard error.
struct TrendCheck {
  double slope = 0.0;
  double stderr_slope = 0.0;
  bool non_decreasing = true;  // slope >= -3 * stderr
};

inline TrendCheck tail_trend(const std::vector<double>& trace, double fraction = 0.1) {
  TrendCheck t;
  const auto n = static_cast<std::size_t>(static_cast<double>(trace.size()) * fraction);
  if (n < 3) return t;
  const std::size_t start = trace.size() - n;
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) mx += static_cast<double>(i), my += trace[start + i];
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (static_cast<double>(i) - mx) * (static_cast<double>(i) - mx);
    sxy += (static_cast<double>(i) - mx) * (trace[start + i] - my);
  }
  t.slope = sxy / sxx;
  double rss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = trace[start + i] - my - t.slope * (static_cast<double>(i) - mx);
    rss += r * r;
  }
  t.stderr_slope = std::sqrt(rss / static_cast<double>(n - 2) / sxx);
  t.non_decreasing = t.slope >= -3.0 * t.stderr_slope;
  return t;
}

}  // namespace emid::estimators
