#ifndef HADALG_GENERATE_HPP
#define HADALG_GENERATE_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hadalg/cp.hpp"
#include "hadalg/dense.hpp"
#include "hadalg/shape.hpp"
#include "hadalg/tt.hpp"

namespace hadalg {

// Grid x_j = j/(n+1), j = 1..n (interior points of the unit interval).
inline std::vector<double> unit_interval_grid(std::int64_t n) {
  std::vector<double> x(n);
  for (std::int64_t j = 1; j <= n; ++j)
    x[j - 1] = static_cast<double>(j) / static_cast<double>(n + 1);
  return x;
}

// f(x) = sum_k prod_{l != k} x_l (1 - x_l), sampled on the tensor grid:
// the separable right-hand side of the d-dimensional Poisson model problem.
// Exact CP rank d: term k has the all-ones vector in mode k and
// x(1-x) samples in every other mode.
inline CpTensor poisson_rhs_cp(std::int64_t n, int d) {
  if (n < 1 || d < 1) throw std::invalid_argument("poisson_rhs_cp: n,d >= 1");
  const auto x = unit_interval_grid(n);
  Eigen::VectorXd g(n), ones = Eigen::VectorXd::Ones(n);
  for (std::int64_t j = 0; j < n; ++j) g(j) = x[j] * (1.0 - x[j]);
  Shape shape(std::vector<std::int64_t>(d, n));
  std::vector<Eigen::MatrixXd> factors(d, Eigen::MatrixXd(n, d));
  for (int nu = 0; nu < d; ++nu)
    for (int k = 0; k < d; ++k) factors[nu].col(k) = (nu == k) ? ones : g;
  return CpTensor(shape, std::move(factors));
}

// Dense sampler of the same function (oracle for small n^d).
inline double poisson_rhs_value(const std::vector<double>& x) {
  const int d = static_cast<int>(x.size());
  double sum = 0.0;
  for (int k = 0; k < d; ++k) {
    double p = 1.0;
    for (int l = 0; l < d; ++l)
      if (l != k) p *= x[l] * (1.0 - x[l]);
    sum += p;
  }
  return sum;
}

inline DenseTensor poisson_rhs_dense(std::int64_t n, int d) {
  const auto x = unit_interval_grid(n);
  Shape shape(std::vector<std::int64_t>(d, n));
  return DenseTensor::from_function(shape, [&](const MultiIndex& m) {
    std::vector<double> xs(d);
    for (int nu = 0; nu < d; ++nu) xs[nu] = x[m[nu]];
    return poisson_rhs_value(xs);
  });
}

// The same right-hand side as an exact rank-2 TT: a one-impurity chain.
// State 0 = "the skipped factor lies ahead" (multiply by g), the 0->1
// transition skips the current mode (factor 1), state 1 multiplies by g.
inline TtTensor poisson_rhs_tt(std::int64_t n, int d) {
  if (n < 1 || d < 1) throw std::invalid_argument("poisson_rhs_tt: n,d >= 1");
  const auto x = unit_interval_grid(n);
  std::vector<double> g(n);
  for (std::int64_t j = 0; j < n; ++j) g[j] = x[j] * (1.0 - x[j]);
  if (d == 1) {
    Shape shape({n});
    return TtTensor(shape, {1, 1}, {std::vector<double>(n, 1.0)});
  }
  Shape shape(std::vector<std::int64_t>(d, n));
  std::vector<int> ranks(d + 1, 2);
  ranks.front() = ranks.back() = 1;
  std::vector<std::vector<double>> cores(d);
  auto at = [](std::vector<double>& c, int rp, std::int64_t m_sz, int a,
               std::int64_t m, int b) -> double& {
    return c[a + static_cast<std::size_t>(rp) * (m + m_sz * b)];
  };
  cores[0].assign(static_cast<std::size_t>(n) * 2, 0.0);
  for (std::int64_t m = 0; m < n; ++m) {
    at(cores[0], 1, n, 0, m, 0) = g[m];
    at(cores[0], 1, n, 0, m, 1) = 1.0;
  }
  for (int nu = 1; nu < d - 1; ++nu) {
    cores[nu].assign(static_cast<std::size_t>(4) * n, 0.0);
    for (std::int64_t m = 0; m < n; ++m) {
      at(cores[nu], 2, n, 0, m, 0) = g[m];
      at(cores[nu], 2, n, 0, m, 1) = 1.0;
      at(cores[nu], 2, n, 1, m, 1) = g[m];
    }
  }
  cores[d - 1].assign(static_cast<std::size_t>(2) * n, 0.0);
  for (std::int64_t m = 0; m < n; ++m) {
    at(cores[d - 1], 2, n, 0, m, 0) = 1.0;
    at(cores[d - 1], 2, n, 1, m, 0) = g[m];
  }
  return TtTensor(shape, std::move(ranks), std::move(cores));
}

// Synthetic positive tensor with a known single-point level set above a
// guaranteed-gap threshold: every mode has one "high" slot worth about
// twice the others, so entries fall in discrete bands c^k and the top band
// is isolated.  Represented with `rank` duplicate terms so truncation has
// work to do.  Entries stay >= ~0.2 * sup relative to the threshold gap.
struct SignBench {
  CpTensor w;
  double threshold = 0.0;
  MultiIndex top_index;
};

inline SignBench sign_bench_cp(int d, std::int64_t n, int rank,
                               std::uint64_t seed) {
  if (d < 1 || n < 2 || rank < 1)
    throw std::invalid_argument("sign_bench_cp: d >= 1, n >= 2, rank >= 1");
  Shape shape(std::vector<std::int64_t>(d, n));
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> slot(0, n - 1);
  MultiIndex top(d);
  double top_value = 1.0;
  std::vector<Eigen::MatrixXd> base(d);
  for (int nu = 0; nu < d; ++nu) {
    top[nu] = slot(rng);
    const double high = 2.0 * (1.0 + 1e-3 * (nu + 1) / d);
    base[nu] = Eigen::MatrixXd::Ones(n, 1);
    base[nu](top[nu], 0) = high;
    top_value *= high;
  }
  CpTensor one_term(shape, std::move(base));
  CpTensor w = one_term.scaled(1.0 / rank);
  for (int i = 1; i < rank; ++i) w = w.plus(one_term.scaled(1.0 / rank));
  // halfway (geometrically) between the top band and the next one below
  const double threshold = top_value / std::sqrt(2.0);
  return SignBench{std::move(w), threshold, std::move(top)};
}

inline CpTensor random_cp(const Shape& shape, int rank, std::uint64_t seed) {
  if (rank < 0) throw std::invalid_argument("random_cp: rank >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<Eigen::MatrixXd> factors;
  for (int nu = 0; nu < shape.order(); ++nu) {
    Eigen::MatrixXd f(shape.mode_size(nu), rank);
    for (int i = 0; i < rank; ++i)
      for (Eigen::Index row = 0; row < f.rows(); ++row) f(row, i) = dist(rng);
    factors.push_back(std::move(f));
  }
  return CpTensor(shape, std::move(factors));
}

// Random TT with the given interior rank (boundary ranks 1), clamped to the
// structural maxima of the unfoldings.
inline TtTensor random_tt(const Shape& shape, int interior_rank,
                          std::uint64_t seed) {
  if (interior_rank < 1) throw std::invalid_argument("random_tt: rank >= 1");
  const int d = shape.order();
  std::vector<int> ranks(d + 1, 1);
  {
    // structural caps: r_nu <= prod of modes on either side
    std::vector<double> left(d + 1, 1.0), right(d + 1, 1.0);
    for (int nu = 0; nu < d; ++nu)
      left[nu + 1] = std::min(1e9, left[nu] * shape.mode_size(nu));
    for (int nu = d - 1; nu >= 0; --nu)
      right[nu] = std::min(1e9, right[nu + 1] * shape.mode_size(nu));
    for (int nu = 1; nu < d; ++nu)
      ranks[nu] = static_cast<int>(
          std::min({static_cast<double>(interior_rank), left[nu], right[nu]}));
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<std::vector<double>> cores(d);
  for (int nu = 0; nu < d; ++nu) {
    cores[nu].resize(static_cast<std::size_t>(ranks[nu]) *
                     shape.mode_size(nu) * ranks[nu + 1]);
    for (auto& c : cores[nu]) c = dist(rng);
  }
  return TtTensor(shape, std::move(ranks), std::move(cores));
}

// Named samplers for the function-sample generator.
inline std::function<double(const MultiIndex&)> named_sampler(
    const std::string& name, const Shape& shape) {
  if (name == "one") return [](const MultiIndex&) { return 1.0; };
  if (name == "coordinate-sum")
    return [](const MultiIndex& m) {
      double s = 0.0;
      for (auto v : m) s += static_cast<double>(v);
      return s;
    };
  if (name == "poisson-rhs") {
    std::vector<std::vector<double>> grids;
    for (int nu = 0; nu < shape.order(); ++nu)
      grids.push_back(unit_interval_grid(shape.mode_size(nu)));
    return [grids](const MultiIndex& m) {
      std::vector<double> xs(m.size());
      for (std::size_t nu = 0; nu < m.size(); ++nu) xs[nu] = grids[nu][m[nu]];
      return poisson_rhs_value(xs);
    };
  }
  throw std::invalid_argument("unknown sampler: " + name);
}

}  // namespace hadalg

#endif  // HADALG_GENERATE_HPP
