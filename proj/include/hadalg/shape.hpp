#ifndef HADALG_SHAPE_HPP
#define HADALG_SHAPE_HPP

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace hadalg {

// Exact integer type for N = prod(M_l); N can be far beyond 2^64.
using BigInt = boost::multiprecision::cpp_int;

// 0-based storage; human-facing output converts to 1-based.
using MultiIndex = std::vector<std::int64_t>;

class Shape {
 public:
  Shape() = default;

  explicit Shape(std::vector<std::int64_t> mode_sizes)
      : mode_sizes_(std::move(mode_sizes)) {
    if (mode_sizes_.empty())
      throw std::invalid_argument("Shape: needs at least one mode");
    for (auto m : mode_sizes_)
      if (m < 1) throw std::invalid_argument("Shape: mode sizes must be >= 1");
  }

  int order() const { return static_cast<int>(mode_sizes_.size()); }
  std::int64_t mode_size(int nu) const { return mode_sizes_.at(nu); }
  const std::vector<std::int64_t>& mode_sizes() const { return mode_sizes_; }

  BigInt total_size() const {
    BigInt n = 1;
    for (auto m : mode_sizes_) n *= m;
    return n;
  }

  // Saturates to +inf when N overflows double range.
  double total_size_double() const { return total_size().convert_to<double>(); }

  // Total size when it fits a machine integer, throws otherwise (dense only).
  std::int64_t total_size_checked(std::int64_t cap) const {
    BigInt n = total_size();
    if (n > cap)
      throw std::length_error("Shape: total size " + n.str() +
                              " exceeds dense cap " + std::to_string(cap));
    return n.convert_to<std::int64_t>();
  }

  bool contains(const MultiIndex& m) const {
    if (static_cast<int>(m.size()) != order()) return false;
    for (int nu = 0; nu < order(); ++nu)
      if (m[nu] < 0 || m[nu] >= mode_sizes_[nu]) return false;
    return true;
  }

  void check_index(const MultiIndex& m) const {
    if (!contains(m)) throw std::out_of_range("MultiIndex out of range");
  }

  friend bool operator==(const Shape& a, const Shape& b) {
    return a.mode_sizes_ == b.mode_sizes_;
  }
  friend bool operator!=(const Shape& a, const Shape& b) { return !(a == b); }

 private:
  std::vector<std::int64_t> mode_sizes_;
};

inline void check_same_shape(const Shape& a, const Shape& b) {
  if (a != b) throw std::invalid_argument("shape mismatch");
}

// Open interval ]lower, upper[, possibly unbounded on either side.
struct Interval {
  double lower = -std::numeric_limits<double>::infinity();
  double upper = std::numeric_limits<double>::infinity();

  Interval() = default;
  Interval(double lo, double hi) : lower(lo), upper(hi) {
    if (!(lower < upper))
      throw std::invalid_argument("Interval: requires lower < upper");
  }

  bool bounded_below() const {
    return lower > -std::numeric_limits<double>::infinity();
  }
  bool bounded_above() const {
    return upper < std::numeric_limits<double>::infinity();
  }
  bool contains(double x) const { return lower < x && x < upper; }
};

}  // namespace hadalg

#endif  // HADALG_SHAPE_HPP
