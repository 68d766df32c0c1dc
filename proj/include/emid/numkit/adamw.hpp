#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "emid/error.hpp"

namespace emid::numkit {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// AdamW (Loshchilov & Hutter): weight decay is applied to the parameters
/// directly and never enters the moment estimates.
class AdamWState {
 public:
  AdamWState(std::size_t n_params, AdamWConfig cfg = {}) : cfg_(cfg), m_(n_params, 0.0), v_(n_params, 0.0) {}

  const AdamWConfig& config() const noexcept { return cfg_; }
  std::size_t step_count() const noexcept { return step_; }
  std::span<const double> first_moment() const noexcept { return m_; }
  std::span<const double> second_moment() const noexcept { return v_; }

  // `block_of` maps a parameter index to a human-readable block name for the
  // non-finite gradient diagnostic.
  void step(std::span<double> params, std::span<const double> grads,
            const std::function<std::string(std::size_t)>& block_of = {}) {
    if (params.size() != m_.size() || grads.size() != m_.size())
      throw ContractError("AdamWState::step: parameter/gradient size mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i) {
      if (!std::isfinite(grads[i])) {
        const std::string block = block_of ? block_of(i) : std::string("params");
        throw NonFiniteError("AdamW: non-finite gradient in block " + block + " at index " + std::to_string(i) +
                             " (step " + std::to_string(step_ + 1) + ")");
      }
    }
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    const double lr = cfg_.learning_rate;
    const double decay = 1.0 - lr * cfg_.weight_decay;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i];
      m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
      v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m_[i] / bc1;
      const double vhat = v_[i] / bc2;
      params[i] = params[i] * decay - lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }

 private:
  AdamWConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t step_ = 0;
};

}  // namespace emid::numkit
