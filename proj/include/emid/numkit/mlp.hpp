#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "emid/error.hpp"
#include "emid/numkit/rng.hpp"

namespace emid::numkit {

/// Two affine layers with a tanh hidden activation and a linear output:
///   y = W2 * tanh(W1 * x + b1) + b2
///
/// Parameters live in one flat vector laid out as [W1 | b1 | W2 | b2], with
/// both weight matrices row-major (row = output unit). That layout is what the
/// optimizer sees, and param_block() names the blocks for diagnostics.
class Mlp2 {
 public:
  Mlp2(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim)
      : in_(in_dim), hidden_(hidden_dim), out_(out_dim), params_(param_count(in_dim, hidden_dim, out_dim), 0.0) {
    if (in_dim == 0 || hidden_dim == 0 || out_dim == 0) throw ContractError("Mlp2: dimensions must be positive");
  }

  static std::size_t param_count(std::size_t in, std::size_t hidden, std::size_t out) {
    return in * hidden + hidden + hidden * out + out;
  }

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases, like torch.nn.Linear.
  static Mlp2 random(std::size_t in_dim, std::size_t hidden_dim, std::size_t out_dim, Rng& rng) {
    Mlp2 net(in_dim, hidden_dim, out_dim);
    const double a1 = 1.0 / std::sqrt(static_cast<double>(in_dim));
    const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
    auto& p = net.params_;
    const std::size_t l1 = in_dim * hidden_dim + hidden_dim;
    for (std::size_t i = 0; i < l1; ++i) p[i] = rng.uniform(-a1, a1);
    for (std::size_t i = l1; i < p.size(); ++i) p[i] = rng.uniform(-a2, a2);
    return net;
  }

  std::size_t in_dim() const noexcept { return in_; }
  std::size_t hidden_dim() const noexcept { return hidden_; }
  std::size_t out_dim() const noexcept { return out_; }

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  double& w1(std::size_t h, std::size_t i) { return params_[h * in_ + i]; }
  double& b1(std::size_t h) { return params_[in_ * hidden_ + h]; }
  double& w2(std::size_t o, std::size_t h) { return params_[off_w2() + o * hidden_ + h]; }
  double& b2(std::size_t o) { return params_[off_b2() + o]; }

  std::string param_block(std::size_t index) const {
    if (index < in_ * hidden_) return "W1";
    if (index < off_w2()) return "b1";
    if (index < off_b2()) return "W2";
    return "b2";
  }

  /// Activations kept from a batched forward pass for the backward pass.
  struct Cache {
    std::size_t rows = 0;
    std::vector<double> input;   // rows x in
    std::vector<double> hidden;  // rows x hidden, post-tanh
    std::vector<double> output;  // rows x out
  };

  std::vector<double> forward(std::span<const double> x) const {
    if (x.size() != in_) throw ContractError("Mlp2::forward: expected input of length " + std::to_string(in_));
    return forward_batch(x, 1).output;
  }

  Cache forward_batch(std::span<const double> x, std::size_t rows) const {
    if (x.size() != rows * in_) throw ContractError("Mlp2::forward_batch: input shape mismatch");
    Cache c;
    c.rows = rows;
    c.input.assign(x.begin(), x.end());
    c.hidden.resize(rows * hidden_);
    c.output.resize(rows * out_);
    const double* W1 = params_.data();
    const double* B1 = W1 + in_ * hidden_;
    const double* W2 = params_.data() + off_w2();
    const double* B2 = params_.data() + off_b2();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* xr = x.data() + r * in_;
      double* hr = c.hidden.data() + r * hidden_;
      for (std::size_t h = 0; h < hidden_; ++h) {
        const double* wrow = W1 + h * in_;
        double s = B1[h];
        for (std::size_t i = 0; i < in_; ++i) s += wrow[i] * xr[i];
        hr[h] = std::tanh(s);
      }
      double* yr = c.output.data() + r * out_;
      for (std::size_t o = 0; o < out_; ++o) {
        const double* wrow = W2 + o * hidden_;
        double s = B2[o];
        for (std::size_t h = 0; h < hidden_; ++h) s += wrow[h] * hr[h];
        yr[o] = s;
      }
    }
    return c;
  }

  /// Gradient of sum_r <upstream_r, output_r> with respect to every parameter,
  /// in the flat parameter layout.
  std::vector<double> backward(const Cache& cache, std::span<const double> upstream) const {
    if (upstream.size() != cache.rows * out_) throw ContractError("Mlp2::backward: upstream shape mismatch");
    if (cache.hidden.size() != cache.rows * hidden_) throw ContractError("Mlp2::backward: cache from another network");
    std::vector<double> g(params_.size(), 0.0);
    double* gW1 = g.data();
    double* gB1 = gW1 + in_ * hidden_;
    double* gW2 = g.data() + off_w2();
    double* gB2 = g.data() + off_b2();
    const double* W2 = params_.data() + off_w2();
    std::vector<double> dh(hidden_);
    for (std::size_t r = 0; r < cache.rows; ++r) {
      const double* hr = cache.hidden.data() + r * hidden_;
      const double* ur = upstream.data() + r * out_;
      const double* xr = cache.input.data() + r * in_;
      std::fill(dh.begin(), dh.end(), 0.0);
      for (std::size_t o = 0; o < out_; ++o) {
        const double u = ur[o];
        if (u == 0.0) continue;
        gB2[o] += u;
        double* grow = gW2 + o * hidden_;
        const double* wrow = W2 + o * hidden_;
        for (std::size_t h = 0; h < hidden_; ++h) {
          grow[h] += u * hr[h];
          dh[h] += u * wrow[h];
        }
      }
      for (std::size_t h = 0; h < hidden_; ++h) {
        const double pre = dh[h] * (1.0 - hr[h] * hr[h]);
        if (pre == 0.0) continue;
        gB1[h] += pre;
        double* grow = gW1 + h * in_;
        for (std::size_t i = 0; i < in_; ++i) grow[i] += pre * xr[i];
      }
    }
    return g;
  }

  std::vector<double> backward(std::span<const double> x, std::span<const double> upstream) const {
    return backward(forward_batch(x, x.size() / in_), upstream);
  }

 private:
  std::size_t off_w2() const { return in_ * hidden_ + hidden_; }
  std::size_t off_b2() const { return off_w2() + hidden_ * out_; }

  std::size_t in_, hidden_, out_;
  std::vector<double> params_;
};

}  // namespace emid::numkit
