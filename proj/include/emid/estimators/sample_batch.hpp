#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "emid/error.hpp"
#include "emid/numkit/rng.hpp"

namespace emid::estimators {

/// Paired feature vectors (query x, response y), row-major and paired by index.
class SampleBatch {
 public:
  SampleBatch() = default;
  SampleBatch(std::size_t dx, std::size_t dy, std::vector<double> x, std::vector<double> y)
      : dx_(dx), dy_(dy), x_(std::move(x)), y_(std::move(y)) {
    if (dx == 0 || dy == 0) throw ContractError("SampleBatch: feature dimensions must be positive");
    if (x_.size() % dx != 0 || y_.size() % dy != 0 || x_.size() / dx != y_.size() / dy)
      throw ContractError("SampleBatch: x and y must hold the same number of rows");
    for (double v : x_)
      if (!std::isfinite(v)) throw NonFiniteError("SampleBatch: non-finite x feature");
    for (double v : y_)
      if (!std::isfinite(v)) throw NonFiniteError("SampleBatch: non-finite y feature");
  }

  std::size_t size() const noexcept { return dx_ == 0 ? 0 : x_.size() / dx_; }
  bool empty() const noexcept { return size() == 0; }
  std::size_t dx() const noexcept { return dx_; }
  std::size_t dy() const noexcept { return dy_; }
  std::span<const double> x() const noexcept { return x_; }
  std::span<const double> y() const noexcept { return y_; }
  std::span<const double> x_row(std::size_t i) const { return std::span<const double>(x_).subspan(i * dx_, dx_); }
  std::span<const double> y_row(std::size_t i) const { return std::span<const double>(y_).subspan(i * dy_, dy_); }

  SampleBatch subset(std::span<const std::size_t> rows) const {
    std::vector<double> x, y;
    x.reserve(rows.size() * dx_);
    y.reserve(rows.size() * dy_);
    for (auto r : rows) {
      if (r >= size()) throw ContractError("SampleBatch::subset: row out of range");
      const auto xr = x_row(r), yr = y_row(r);
      x.insert(x.end(), xr.begin(), xr.end());
      y.insert(y.end(), yr.begin(), yr.end());
    }
    return SampleBatch(dx_, dy_, std::move(x), std::move(y));
  }

  SampleBatch slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > size()) throw ContractError("SampleBatch::slice: bad range");
    return SampleBatch(dx_, dy_, std::vector<double>(x_.begin() + begin * dx_, x_.begin() + end * dx_),
                       std::vector<double>(y_.begin() + begin * dy_, y_.begin() + end * dy_));
  }

  /// Same x rows, responses permuted: breaks the pairing, keeps both marginals.
  SampleBatch shuffled_pairs(numkit::Rng& rng) const {
    std::vector<std::size_t> idx(size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    rng.shuffle(idx);
    std::vector<double> y(y_.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto src = y_row(idx[i]);
      std::copy(src.begin(), src.end(), y.begin() + static_cast<std::ptrdiff_t>(i * dy_));
    }
    return SampleBatch(dx_, dy_, x_, std::move(y));
  }

  static SampleBatch concat(const SampleBatch& a, const SampleBatch& b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    if (a.dx_ != b.dx_ || a.dy_ != b.dy_) throw ContractError("SampleBatch::concat: dimension mismatch");
    std::vector<double> x = a.x_, y = a.y_;
    x.insert(x.end(), b.x_.begin(), b.x_.end());
    y.insert(y.end(), b.y_.begin(), b.y_.end());
    return SampleBatch(a.dx_, a.dy_, std::move(x), std::move(y));
  }

  bool operator==(const SampleBatch& o) const { return dx_ == o.dx_ && dy_ == o.dy_ && x_ == o.x_ && y_ == o.y_; }

 private:
  std::size_t dx_ = 0, dy_ = 0;
  std::vector<double> x_, y_;
};

}  // namespace emid::estimators
