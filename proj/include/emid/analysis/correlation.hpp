#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "emid/error.hpp"
#include "emid/numkit/rng.hpp"

namespace emid::analysis {

struct PairedSeries {
  std::string name;
  std::vector<std::string> labels;
  std::vector<double> a, b;

  std::size_t size() const { return a.size(); }
  void push(std::string label, double x, double y) {
    labels.push_back(std::move(label));
    a.push_back(x);
    b.push_back(y);
  }
  void validate(std::size_t min_n = 3) const {
    if (a.size() != b.size() || (!labels.empty() && labels.size() != a.size()))
      throw ContractError("PairedSeries '" + name + "': length mismatch");
    if (a.size() < min_n) throw ContractError("PairedSeries '" + name + "': need n >= " + std::to_string(min_n));
    for (std::size_t i = 0; i < a.size(); ++i)
      if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw ContractError("PairedSeries '" + name + "': non-finite entry");
  }
};

enum class CorrMethod { spearman, kendall, pearson };

inline std::string to_string(CorrMethod m) {
  switch (m) {
    case CorrMethod::spearman: return "spearman";
    case CorrMethod::kendall: return "kendall";
    case CorrMethod::pearson: return "pearson";
  }
  return "?";
}

struct CorrResult {
  CorrMethod method = CorrMethod::pearson;
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  std::size_t permutations = 0;  // enumerated or sampled
  bool exact = false;
  std::uint64_t seed = 0;
};

struct PermutationOptions {
  std::size_t permutations = 10000;
  std::uint64_t seed = 0;
  std::size_t exact_max_n = 7;
};

/// Average ranks, 1-based; ties share the mean of their positions.
inline std::vector<double> midranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson_r(const std::vector<double>& a, const std::vector<double>& b) {
  const auto n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw UndefinedStatistic("correlation of a constant series is undefined");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

inline double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson_r(midranks(a), midranks(b));
}

/// tau-b by pairwise enumeration.
inline double kendall_tau_b(const std::vector<double>& a, const std::vector<double>& b) {
  double conc = 0.0, disc = 0.0, ties_a = 0.0, ties_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const double da = a[i] - a[j], db = b[i] - b[j];
      if (da == 0.0 && db == 0.0) continue;
      if (da == 0.0) {
        ties_a += 1.0;
      } else if (db == 0.0) {
        ties_b += 1.0;
      } else if ((da > 0.0) == (db > 0.0)) {
        conc += 1.0;
      } else {
        disc += 1.0;
      }
    }
  const double denom = std::sqrt((conc + disc + ties_a) * (conc + disc + ties_b));
  if (denom == 0.0) throw UndefinedStatistic("kendall tau of a constant series is undefined");
  return std::clamp((conc - disc) / denom, -1.0, 1.0);
}

inline double statistic(CorrMethod m, const std::vector<double>& a, const std::vector<double>& b) {
  switch (m) {
    case CorrMethod::spearman: return spearman_rho(a, b);
    case CorrMethod::kendall: return kendall_tau_b(a, b);
    case CorrMethod::pearson: return pearson_r(a, b);
  }
  return 0.0;
}

/// Two-sided permutation test on |statistic|: exact enumeration of every
/// reordering of b when n <= exact_max_n, otherwise `permutations` seeded
/// shuffles with p = (1 + hits) / (1 + permutations).
inline CorrResult correlate(CorrMethod m, const PairedSeries& s, const PermutationOptions& opt = {}) {
  s.validate();
  CorrResult r;
  r.method = m;
  r.n = s.size();
  r.seed = opt.seed;
  r.statistic = statistic(m, s.a, s.b);
  const double obs = std::abs(r.statistic) - 1e-12;
  std::vector<double> perm = s.b;
  std::size_t hits = 0;
  if (s.size() <= opt.exact_max_n) {
    r.exact = true;
    std::sort(perm.begin(), perm.end());
    std::size_t total = 0;
    do {
      ++total;
      if (std::abs(statistic(m, s.a, perm)) >= obs) ++hits;
    } while (std::next_permutation(perm.begin(), perm.end()));
    // distinct orderings of a multiset are equally likely under relabeling
    r.permutations = total;
    r.p_value = static_cast<double>(hits) / static_cast<double>(total);
    return r;
  }
  if (opt.permutations == 0) throw ContractError("correlate: need at least one permutation");
  numkit::Rng rng(opt.seed);
  for (std::size_t k = 0; k < opt.permutations; ++k) {
    rng.shuffle(perm);
    double st = 0.0;
    try {
      st = statistic(m, s.a, perm);
    } catch (const UndefinedStatistic&) {
      continue;
    }
    if (std::abs(st) >= obs) ++hits;
  }
  r.permutations = opt.permutations;
  r.p_value = static_cast<double>(hits + 1) / static_cast<double>(opt.permutations + 1);
  return r;
}

inline CorrResult spearman(const PairedSeries& s, const PermutationOptions& opt = {}) {
  return correlate(CorrMethod::spearman, s, opt);
}
inline CorrResult kendall(const PairedSeries& s, const PermutationOptions& opt = {}) {
  return correlate(CorrMethod::kendall, s, opt);
}
inline CorrResult pearson(const PairedSeries& s, const PermutationOptions& opt = {}) {
  return correlate(CorrMethod::pearson, s, opt);
}

struct Line {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Least squares b ~ slope * a + intercept.
inline Line fit_line(const PairedSeries& s) {
  s.validate(2);
  const auto n = static_cast<double>(s.size());
  const double ma = std::accumulate(s.a.begin(), s.a.end(), 0.0) / n;
  const double mb = std::accumulate(s.b.begin(), s.b.end(), 0.0) / n;
  double saa = 0.0, sab = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    saa += (s.a[i] - ma) * (s.a[i] - ma);
    sab += (s.a[i] - ma) * (s.b[i] - mb);
  }
  if (saa == 0.0) throw UndefinedStatistic("fit_line: constant regressor");
  Line l;
  l.slope = sab / saa;
  l.intercept = mb - l.slope * ma;
  return l;
}

}  // namespace emid::analysis
