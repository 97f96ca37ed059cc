#ifndef HADALG_DENSE_HPP
#define HADALG_DENSE_HPP

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "hadalg/iteration.hpp"
#include "hadalg/shape.hpp"

namespace hadalg {

// Entry cap for full storage; larger requests are refused, never truncated.
inline std::int64_t dense_cap() {
  static const std::int64_t cap = [] {
    if (const char* env = std::getenv("HADALG_DENSE_CAP"))
      return static_cast<std::int64_t>(std::atoll(env));
    return std::int64_t{10'000'000};
  }();
  return cap;
}

// Full-storage backend.  Row-major linearization, last index fastest;
// this ordering is part of the file format and of tie-breaking rules.
class DenseTensor {
 public:
  DenseTensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)), values_(std::move(values)) {
    if (static_cast<std::int64_t>(values_.size()) !=
        shape_.total_size_checked(dense_cap()))
      throw std::invalid_argument("DenseTensor: value count mismatch");
  }

  static DenseTensor zero(const Shape& shape) {
    return DenseTensor(
        shape, std::vector<double>(shape.total_size_checked(dense_cap()), 0.0));
  }

  static DenseTensor unit(const Shape& shape) {
    return DenseTensor(
        shape, std::vector<double>(shape.total_size_checked(dense_cap()), 1.0));
  }

  static DenseTensor basis(const Shape& shape, const MultiIndex& m) {
    DenseTensor e = zero(shape);
    e.values_[e.linear_index(m)] = 1.0;
    return e;
  }

  static DenseTensor from_function(
      const Shape& shape, const std::function<double(const MultiIndex&)>& f) {
    const std::int64_t n = shape.total_size_checked(dense_cap());
    std::vector<double> vals(n);
    MultiIndex m(shape.order(), 0);
    for (std::int64_t lin = 0; lin < n; ++lin) {
      vals[lin] = f(m);
      for (int nu = shape.order() - 1; nu >= 0; --nu) {
        if (++m[nu] < shape.mode_size(nu)) break;
        m[nu] = 0;
      }
    }
    return DenseTensor(shape, std::move(vals));
  }

  const Shape& shape() const { return shape_; }
  const std::vector<double>& values() const { return values_; }
  std::int64_t size() const { return static_cast<std::int64_t>(values_.size()); }

  std::int64_t linear_index(const MultiIndex& m) const {
    shape_.check_index(m);
    std::int64_t lin = 0;
    for (int nu = 0; nu < shape_.order(); ++nu)
      lin = lin * shape_.mode_size(nu) + m[nu];
    return lin;
  }

  MultiIndex multi_index(std::int64_t lin) const {
    MultiIndex m(shape_.order());
    for (int nu = shape_.order() - 1; nu >= 0; --nu) {
      m[nu] = lin % shape_.mode_size(nu);
      lin /= shape_.mode_size(nu);
    }
    return m;
  }

  double entry(const MultiIndex& m) const { return values_[linear_index(m)]; }

  // --- algebra contract ---

  DenseTensor plus(const DenseTensor& other) const {
    check_same_shape(shape_, other.shape_);
    std::vector<double> out(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i)
      out[i] = values_[i] + other.values_[i];
    return DenseTensor(shape_, std::move(out));
  }

  DenseTensor scaled(double alpha) const {
    std::vector<double> out(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) out[i] = alpha * values_[i];
    return DenseTensor(shape_, std::move(out));
  }

  DenseTensor hadamard(const DenseTensor& other) const {
    check_same_shape(shape_, other.shape_);
    std::vector<double> out(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i)
      out[i] = values_[i] * other.values_[i];
    return DenseTensor(shape_, std::move(out));
  }

  double inner(const DenseTensor& other) const {
    check_same_shape(shape_, other.shape_);
    double s = 0.0;
    for (std::size_t i = 0; i < values_.size(); ++i)
      s += values_[i] * other.values_[i];
    return s;
  }

  double norm() const { return std::sqrt(std::max(0.0, inner(*this))); }

  int representation_rank() const { return 1; }

  DenseTensor truncated(const TruncationPolicy&,
                        TruncationInfo* info = nullptr) const {
    if (info) *info = TruncationInfo{};
    return *this;
  }

  DenseTensor transformed(const std::function<double(double)>& f) const {
    std::vector<double> out(values_.size());
    for (std::size_t i = 0; i < values_.size(); ++i) out[i] = f(values_[i]);
    return DenseTensor(shape_, std::move(out));
  }

  // --- brute-force oracles ---

  // Ties broken by smallest row-major linear index.
  std::pair<MultiIndex, double> argmax() const {
    std::int64_t best = 0;
    for (std::int64_t i = 1; i < size(); ++i)
      if (values_[i] > values_[best]) best = i;
    return {multi_index(best), values_[best]};
  }

  std::pair<MultiIndex, double> argmin() const {
    std::int64_t best = 0;
    for (std::int64_t i = 1; i < size(); ++i)
      if (values_[i] < values_[best]) best = i;
    return {multi_index(best), values_[best]};
  }

  std::pair<MultiIndex, double> argmax_abs() const {
    std::int64_t best = 0;
    for (std::int64_t i = 1; i < size(); ++i)
      if (std::abs(values_[i]) > std::abs(values_[best])) best = i;
    return {multi_index(best), values_[best]};
  }

  MultiIndex dominant_index() const { return argmax_abs().first; }

  BigInt level_count(const Interval& s) const {
    std::int64_t c = 0;
    for (double v : values_)
      if (s.contains(v)) ++c;
    return BigInt(c);
  }

  std::pair<double, double> mean_var() const {
    const double n = static_cast<double>(size());
    double mean = std::accumulate(values_.begin(), values_.end(), 0.0) / n;
    double var = 0.0;
    for (double v : values_) var += (v - mean) * (v - mean);
    return {mean, var / n};
  }

  // All entry values, sorted descending by absolute value, with multiplicity.
  std::vector<double> spectrum() const {
    std::vector<double> s = values_;
    std::sort(s.begin(), s.end(), [](double a, double b) {
      return std::abs(a) > std::abs(b);
    });
    return s;
  }

 private:
  Shape shape_;
  std::vector<double> values_;
};

}  // namespace hadalg

#endif  // HADALG_DENSE_HPP
