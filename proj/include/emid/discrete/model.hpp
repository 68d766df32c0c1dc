#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "emid/discrete/info.hpp"
#include "emid/discrete/joint.hpp"
#include "emid/error.hpp"
#include "emid/numkit/rng.hpp"

namespace emid::discrete {

/// P_theta(y | x_v, x_t) as a table of logits with row-wise softmax.
class ConditionalModel {
 public:
  static ConditionalModel from_logits(std::size_t nv, std::size_t nt, std::size_t ny, std::vector<double> logits) {
    if (nv == 0 || nt == 0 || ny == 0) throw ContractError("ConditionalModel: alphabet sizes must be positive");
    if (logits.size() != nv * nt * ny) throw ContractError("ConditionalModel: logits size mismatch");
    for (double l : logits)
      if (!std::isfinite(l)) throw NonFiniteError("ConditionalModel: non-finite logit");
    ConditionalModel m(nv, nt, ny);
    m.logits_ = std::move(logits);
    m.refresh();
    return m;
  }

  // Logits are log(table); every entry must be strictly positive.
  static ConditionalModel from_table(std::size_t nv, std::size_t nt, std::size_t ny, std::span<const double> table) {
    if (table.size() != nv * nt * ny) throw ContractError("ConditionalModel::from_table: size mismatch");
    std::vector<double> logits(table.size());
    for (std::size_t x = 0; x < nv * nt; ++x) {
      validate_distribution(table.subspan(x * ny, ny), kSumTolerance, "model row");
      for (std::size_t y = 0; y < ny; ++y) {
        const double v = table[x * ny + y];
        if (v <= 0.0) throw InvalidDistribution("ConditionalModel::from_table: softmax rows must be strictly positive");
        logits[x * ny + y] = std::log(v);
      }
    }
    // keep the table as given rather than softmax(log(table))
    auto m = from_logits(nv, nt, ny, std::move(logits));
    m.probs_.assign(table.begin(), table.end());
    return m;
  }

  // Rebuilds a serialized model with its stored table kept bit-exact.
  static ConditionalModel restore(std::size_t nv, std::size_t nt, std::size_t ny, std::vector<double> logits,
                                  std::span<const double> table) {
    auto m = from_logits(nv, nt, ny, std::move(logits));
    if (table.size() != m.probs_.size()) throw ContractError("ConditionalModel::restore: table size mismatch");
    for (std::size_t i = 0; i < table.size(); ++i)
      if (std::abs(table[i] - m.probs_[i]) > 1e-12) throw ContractError("ConditionalModel::restore: table disagrees with logits");
    m.probs_.assign(table.begin(), table.end());
    return m;
  }

  static ConditionalModel uniform(std::size_t nv, std::size_t nt, std::size_t ny) {
    return from_logits(nv, nt, ny, std::vector<double>(nv * nt * ny, 0.0));
  }

  // The joint's own conditional P(y|x). Requires a strictly positive table.
  static ConditionalModel true_conditional(const DiscreteJoint& j) {
    return from_table(j.nv(), j.nt(), j.ny(), j.response_conditional());
  }

  static ConditionalModel random(std::size_t nv, std::size_t nt, std::size_t ny, numkit::Rng& rng, double scale = 1.0) {
    std::vector<double> logits(nv * nt * ny);
    for (auto& l : logits) l = scale * rng.normal();
    return from_logits(nv, nt, ny, std::move(logits));
  }

  std::size_t nv() const noexcept { return nv_; }
  std::size_t nt() const noexcept { return nt_; }
  std::size_t ny() const noexcept { return ny_; }
  std::size_t nx() const noexcept { return nv_ * nt_; }

  std::span<const double> logits() const noexcept { return logits_; }
  std::span<const double> table() const noexcept { return probs_; }
  std::span<const double> row(std::size_t x) const { return std::span<const double>(probs_).subspan(x * ny_, ny_); }
  double prob(std::size_t x, std::size_t y) const { return probs_[x * ny_ + y]; }

  bool matches(const DiscreteJoint& j) const { return nv_ == j.nv() && nt_ == j.nt() && ny_ == j.ny(); }
  bool operator==(const ConditionalModel& o) const {
    return nv_ == o.nv_ && nt_ == o.nt_ && ny_ == o.ny_ && logits_ == o.logits_;
  }

 private:
  ConditionalModel(std::size_t nv, std::size_t nt, std::size_t ny) : nv_(nv), nt_(nt), ny_(ny) {}

  void refresh() {
    probs_.resize(logits_.size());
    for (std::size_t x = 0; x < nx(); ++x) {
      const double* l = logits_.data() + x * ny_;
      double* p = probs_.data() + x * ny_;
      const double mx = *std::max_element(l, l + ny_);
      double s = 0.0;
      for (std::size_t y = 0; y < ny_; ++y) s += (p[y] = std::exp(l[y] - mx));
      for (std::size_t y = 0; y < ny_; ++y) p[y] /= s;
    }
  }

  std::size_t nv_, nt_, ny_;
  std::vector<double> logits_;
  std::vector<double> probs_;
};

inline void require_match(const DiscreteJoint& j, const ConditionalModel& m, const char* what) {
  if (!m.matches(j)) throw ContractError(std::string(what) + ": joint and model alphabet sizes differ");
}

/// P_X(x) * P_theta(y | x). Zero-mass inputs keep the model row as their fill.
inline DiscreteJoint tensor_joint(const DiscreteJoint& j, const ConditionalModel& m) {
  require_match(j, m, "tensor_joint");
  return DiscreteJoint::from_factors(j.nv(), j.nt(), j.ny(), j.input_marginal(), m.table());
}

/// H(E_x P_theta(.|x)) - E_x H(P_theta(.|x)), computed without forming the
/// tensor joint.
inline double generation_mi(const DiscreteJoint& j, const ConditionalModel& m) {
  require_match(j, m, "generation_mi");
  const auto in = j.input_marginal();
  std::vector<double> marg(j.ny(), 0.0);
  double cond = 0.0;
  for (std::size_t x = 0; x < j.nx(); ++x) {
    if (in[x] <= 0.0) continue;
    const auto r = m.row(x);
    for (std::size_t y = 0; y < j.ny(); ++y) marg[y] += in[x] * r[y];
    cond += in[x] * entropy(r);
  }
  double h = 0.0;
  for (double v : marg) h -= detail::xlogx(v);
  return std::max(h - cond, 0.0);
}

/// P_{Y_theta}: the response marginal the model induces on the joint's inputs.
inline std::vector<double> model_response_marginal(const DiscreteJoint& j, const ConditionalModel& m) {
  require_match(j, m, "model_response_marginal");
  const auto in = j.input_marginal();
  std::vector<double> marg(j.ny(), 0.0);
  for (std::size_t x = 0; x < j.nx(); ++x) {
    if (in[x] <= 0.0) continue;
    for (std::size_t y = 0; y < j.ny(); ++y) marg[y] += in[x] * m.prob(x, y);
  }
  return marg;
}

/// E_{x,y~P}[-log P_theta(y|x)].
inline double cross_entropy_loss(const DiscreteJoint& j, const ConditionalModel& m) {
  require_match(j, m, "cross_entropy_loss");
  double s = 0.0;
  for (std::size_t x = 0; x < j.nx(); ++x)
    for (std::size_t y = 0; y < j.ny(); ++y) {
      const double p = j.at(x, y);
      if (p > 0.0) s -= p * std::log(m.prob(x, y));
    }
  return s;
}

/// E_x KL(P_{Y|X=x} || P_theta(.|x)), the data-first direction.
inline double expected_kl_data_model(const DiscreteJoint& j, const ConditionalModel& m) {
  require_match(j, m, "expected_kl_data_model");
  const auto in = j.input_marginal();
  double s = 0.0;
  for (std::size_t x = 0; x < j.nx(); ++x) {
    if (in[x] <= 0.0) continue;
    s += in[x] * kl(j.response_row(x), m.row(x)).finite_or_throw();
  }
  return s;
}

/// E_x KL(P_theta(.|x) || P_{Y|X=x}), the model-first direction. Infinite when
/// some supported row of the data has a zero the model does not share.
inline KlValue expected_kl_model_data(const DiscreteJoint& j, const ConditionalModel& m) {
  require_match(j, m, "expected_kl_model_data");
  const auto in = j.input_marginal();
  double s = 0.0;
  for (std::size_t x = 0; x < j.nx(); ++x) {
    if (in[x] <= 0.0) continue;
    const auto k = kl(m.row(x), j.response_row(x));
    if (k.infinite) return k;
    s += in[x] * k.value;
  }
  return {s, false};
}

/// Gradient of the cross-entropy loss with respect to the logits:
/// P_X(x) * (softmax(l_x) - P(.|x)).
inline std::vector<double> cross_entropy_gradient(const DiscreteJoint& j, const ConditionalModel& m) {
  require_match(j, m, "cross_entropy_gradient");
  std::vector<double> g(m.logits().size(), 0.0);
  const auto in = j.input_marginal();
  for (std::size_t x = 0; x < j.nx(); ++x) {
    if (in[x] <= 0.0) continue;
    for (std::size_t y = 0; y < j.ny(); ++y) g[x * j.ny() + y] = in[x] * m.prob(x, y) - j.at(x, y);
  }
  return g;
}

struct TuneOptions {
  std::size_t steps = 5000;
  double lr = 0.5;
  // Stop early once E_x KL(P_{Y|X} || P_theta) falls to this level.
  std::optional<double> stop_kl;
  bool record_loss = false;
};

struct TuneResult {
  ConditionalModel model;
  std::size_t steps_taken = 0;
  std::vector<double> loss_trace;  // loss before each step, then the final loss
};

/// Largest step size with guaranteed monotone descent. Each softmax row's
/// Hessian is bounded by P_X(x)/2 in spectral norm, so lr <= 2 / max_x P_X(x)
/// keeps plain gradient descent monotone.
inline double safe_learning_rate(const DiscreteJoint& j) {
  const auto in = j.input_marginal();
  const double mx = *std::max_element(in.begin(), in.end());
  return 2.0 / mx;
}

/// Full-batch gradient descent on E_{x,y~P}[-log P_theta(y|x)] over the logit
/// table (single-token instruction tuning).
inline TuneResult instruction_tune(const DiscreteJoint& j, const ConditionalModel& init, const TuneOptions& opt) {
  require_match(j, init, "instruction_tune");
  if (!(opt.lr > 0.0) || !std::isfinite(opt.lr)) throw ContractError("instruction_tune: lr must be positive");
  TuneResult res{init, 0, {}};
  std::vector<double> logits(init.logits().begin(), init.logits().end());
  for (std::size_t step = 0; step < opt.steps; ++step) {
    if (opt.record_loss || step == 0) {
      const double loss = cross_entropy_loss(j, res.model);
      if (!std::isfinite(loss)) throw NonFiniteError("instruction_tune: non-finite loss at step " + std::to_string(step));
      if (opt.record_loss) res.loss_trace.push_back(loss);
    }
    if (opt.stop_kl && expected_kl_data_model(j, res.model) <= *opt.stop_kl) break;
    const auto g = cross_entropy_gradient(j, res.model);
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] -= opt.lr * g[i];
    for (double l : logits)
      if (!std::isfinite(l)) throw NonFiniteError("instruction_tune: non-finite logits at step " + std::to_string(step));
    res.model = ConditionalModel::from_logits(j.nv(), j.nt(), j.ny(), logits);
    ++res.steps_taken;
  }
  if (opt.record_loss) res.loss_trace.push_back(cross_entropy_loss(j, res.model));
  return res;
}

inline ConditionalModel instruction_tune(const DiscreteJoint& j, const ConditionalModel& init, std::size_t steps,
                                         double lr) {
  TuneOptions opt;
  opt.steps = steps;
  opt.lr = lr;
  return instruction_tune(j, init, opt).model;
}

struct LowerBoundIdentity {
  double lhs = 0.0;          // I(P_XY)
  double expected_log = 0.0;  // E[log P_theta(y|x)]
  double h_y = 0.0;
  double delta = 0.0;        // E_x KL(P_{Y|X=x} || P_theta(.|x))
  double rhs_sum = 0.0;      // expected_log + h_y + delta
  double residual = 0.0;     // |lhs - rhs_sum|
  bool lower_bound_holds = false;  // lhs >= expected_log + h_y
};

inline LowerBoundIdentity lower_bound_identity_check(const DiscreteJoint& j, const ConditionalModel& m) {
  require_match(j, m, "lower_bound_identity_check");
  LowerBoundIdentity r;
  r.lhs = mutual_information(j);
  r.expected_log = -cross_entropy_loss(j, m);
  r.h_y = entropy(j.response_marginal());
  r.delta = expected_kl_data_model(j, m);
  r.rhs_sum = r.expected_log + r.h_y + r.delta;
  r.residual = std::abs(r.lhs - r.rhs_sum);
  r.lower_bound_holds = r.lhs >= r.expected_log + r.h_y - 1e-12;
  return r;
}

/// Dirichlet(alpha) over the whole tensor.
inline DiscreteJoint random_joint(std::size_t nv, std::size_t nt, std::size_t ny, numkit::Rng& rng,
                                  double alpha = 1.0) {
  return DiscreteJoint::from_tensor(nv, nt, ny, rng.dirichlet(nv * nt * ny, alpha));
}

}  // namespace emid::discrete
