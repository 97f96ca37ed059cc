#ifndef HADALG_TT_HPP
#define HADALG_TT_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "hadalg/cp.hpp"
#include "hadalg/dense.hpp"
#include "hadalg/iteration.hpp"
#include "hadalg/shape.hpp"

namespace hadalg {

// Tensor-train backend: chain of order-3 cores G_nu of size
// r_{nu-1} x M_nu x r_nu with boundary ranks 1.  Core storage is flat with
// index a + r_prev*(m + M*b), so the same buffer maps column-major onto both
// the left unfolding (r_prev*M) x r_next and the right unfolding
// r_prev x (M*r_next).
class TtTensor {
 public:
  TtTensor(Shape shape, std::vector<int> ranks,
           std::vector<std::vector<double>> cores)
      : shape_(std::move(shape)),
        ranks_(std::move(ranks)),
        cores_(std::move(cores)) {
    const int d = shape_.order();
    if (static_cast<int>(ranks_.size()) != d + 1 ||
        static_cast<int>(cores_.size()) != d)
      throw std::invalid_argument("TtTensor: rank/core count mismatch");
    if (ranks_.front() != 1 || ranks_.back() != 1)
      throw std::invalid_argument("TtTensor: boundary ranks must be 1");
    for (int nu = 0; nu < d; ++nu) {
      if (ranks_[nu] < 1 || ranks_[nu + 1] < 1)
        throw std::invalid_argument("TtTensor: ranks must be >= 1");
      if (static_cast<std::int64_t>(cores_[nu].size()) !=
          static_cast<std::int64_t>(ranks_[nu]) * shape_.mode_size(nu) *
              ranks_[nu + 1])
        throw std::invalid_argument("TtTensor: core size mismatch");
    }
  }

  static TtTensor zero(const Shape& shape) {
    std::vector<int> ranks(shape.order() + 1, 1);
    std::vector<std::vector<double>> cores;
    for (int nu = 0; nu < shape.order(); ++nu)
      cores.emplace_back(shape.mode_size(nu), 0.0);
    return TtTensor(shape, std::move(ranks), std::move(cores));
  }

  static TtTensor unit(const Shape& shape) {
    std::vector<int> ranks(shape.order() + 1, 1);
    std::vector<std::vector<double>> cores;
    for (int nu = 0; nu < shape.order(); ++nu)
      cores.emplace_back(shape.mode_size(nu), 1.0);
    return TtTensor(shape, std::move(ranks), std::move(cores));
  }

  static TtTensor basis(const Shape& shape, const MultiIndex& m) {
    shape.check_index(m);
    std::vector<int> ranks(shape.order() + 1, 1);
    std::vector<std::vector<double>> cores;
    for (int nu = 0; nu < shape.order(); ++nu) {
      std::vector<double> core(shape.mode_size(nu), 0.0);
      core[m[nu]] = 1.0;
      cores.push_back(std::move(core));
    }
    return TtTensor(shape, std::move(ranks), std::move(cores));
  }

  // Diagonal-core construction: interior ranks equal the CP rank.
  static TtTensor from_cp(const CpTensor& w) {
    const Shape& shape = w.shape();
    const int d = shape.order();
    const int r = w.rank();
    if (r == 0) return zero(shape);
    if (d == 1) {
      std::vector<double> core(shape.mode_size(0), 0.0);
      for (int i = 0; i < r; ++i)
        for (std::int64_t m = 0; m < shape.mode_size(0); ++m)
          core[m] += w.factors()[0](m, i);
      return TtTensor(shape, {1, 1}, {std::move(core)});
    }
    std::vector<int> ranks(d + 1, r);
    ranks.front() = ranks.back() = 1;
    std::vector<std::vector<double>> cores(d);
    for (int nu = 0; nu < d; ++nu) {
      const std::int64_t m_sz = shape.mode_size(nu);
      const int rp = ranks[nu], rn = ranks[nu + 1];
      cores[nu].assign(static_cast<std::size_t>(rp) * m_sz * rn, 0.0);
      for (int i = 0; i < r; ++i)
        for (std::int64_t m = 0; m < m_sz; ++m) {
          const int a = (nu == 0) ? 0 : i;
          const int b = (nu == d - 1) ? 0 : i;
          cores[nu][a + static_cast<std::size_t>(rp) * (m + m_sz * b)] =
              w.factors()[nu](m, i);
        }
    }
    return TtTensor(shape, std::move(ranks), std::move(cores));
  }

  const Shape& shape() const { return shape_; }
  const std::vector<int>& tt_ranks() const { return ranks_; }
  const std::vector<std::vector<double>>& cores() const { return cores_; }

  int representation_rank() const {
    return *std::max_element(ranks_.begin(), ranks_.end());
  }

  Eigen::Map<const Eigen::MatrixXd> left_unfolding(int nu) const {
    return {cores_[nu].data(),
            static_cast<Eigen::Index>(ranks_[nu]) * shape_.mode_size(nu),
            static_cast<Eigen::Index>(ranks_[nu + 1])};
  }

  Eigen::Map<const Eigen::MatrixXd> right_unfolding(int nu) const {
    return {cores_[nu].data(), static_cast<Eigen::Index>(ranks_[nu]),
            shape_.mode_size(nu) * static_cast<Eigen::Index>(ranks_[nu + 1])};
  }

  // r_prev x r_next slice for one mode index
  Eigen::MatrixXd slice(int nu, std::int64_t m) const {
    const int rp = ranks_[nu], rn = ranks_[nu + 1];
    const std::int64_t m_sz = shape_.mode_size(nu);
    Eigen::MatrixXd s(rp, rn);
    for (int b = 0; b < rn; ++b)
      for (int a = 0; a < rp; ++a)
        s(a, b) = cores_[nu][a + static_cast<std::size_t>(rp) * (m + m_sz * b)];
    return s;
  }

  double entry(const MultiIndex& m) const {
    shape_.check_index(m);
    Eigen::RowVectorXd l = Eigen::RowVectorXd::Ones(1);
    for (int nu = 0; nu < shape_.order(); ++nu) l = l * slice(nu, m[nu]);
    return l(0);
  }

  // --- algebra contract ---

  // Rescale cores to a common Frobenius norm (their geometric mean).  This
  // is a pure gauge change -- the represented tensor is unchanged -- but it
  // keeps per-core magnitudes representable: repeated Hadamard squaring
  // doubles any scale imbalance between cores, and a lopsided gauge makes
  // the left-to-right contractions in inner() pass through inf/0 even when
  // the final value is moderate.
  TtTensor balanced() const {
    const int d = shape_.order();
    std::vector<double> f(d);
    for (int nu = 0; nu < d; ++nu) {
      double mx = 0.0;
      for (double x : cores_[nu]) mx = std::max(mx, std::abs(x));
      if (mx == 0.0 || !std::isfinite(mx)) return *this;  // zero or poisoned
      double s = 0.0;
      for (double x : cores_[nu]) s += (x / mx) * (x / mx);
      f[nu] = mx * std::sqrt(s);
    }
    double log_g = 0.0;
    for (int nu = 0; nu < d; ++nu) log_g += std::log(f[nu]);
    log_g /= d;
    TtTensor out = *this;
    for (int nu = 0; nu < d; ++nu) {
      const double c = std::exp(log_g - std::log(f[nu]));
      for (double& x : out.cores_[nu]) x *= c;
    }
    return out;
  }

  TtTensor scaled(double alpha) const {
    TtTensor out = *this;
    for (double& x : out.cores_[0]) x *= alpha;
    return out.balanced();
  }

  // Block-diagonal core concatenation; interior ranks add.
  TtTensor plus(const TtTensor& other) const {
    check_same_shape(shape_, other.shape_);
    const int d = shape_.order();
    std::vector<int> ranks(d + 1, 1);
    for (int nu = 1; nu < d; ++nu) ranks[nu] = ranks_[nu] + other.ranks_[nu];
    std::vector<std::vector<double>> cores(d);
    for (int nu = 0; nu < d; ++nu) {
      const std::int64_t m_sz = shape_.mode_size(nu);
      const int rp = ranks[nu], rn = ranks[nu + 1];
      cores[nu].assign(static_cast<std::size_t>(rp) * m_sz * rn, 0.0);
      auto put = [&](int a, std::int64_t m, int b, double v) {
        cores[nu][a + static_cast<std::size_t>(rp) * (m + m_sz * b)] += v;
      };
      const int a_off = (nu == 0) ? 0 : ranks_[nu];
      const int b_off = (nu == d - 1) ? 0 : ranks_[nu + 1];
      for (std::int64_t m = 0; m < m_sz; ++m) {
        Eigen::MatrixXd su = slice(nu, m);
        Eigen::MatrixXd sv = other.slice(nu, m);
        for (int a = 0; a < su.rows(); ++a)
          for (int b = 0; b < su.cols(); ++b) put(a, m, b, su(a, b));
        for (int a = 0; a < sv.rows(); ++a)
          for (int b = 0; b < sv.cols(); ++b)
            put(a + a_off, m, b + b_off, sv(a, b));
      }
    }
    return TtTensor(shape_, std::move(ranks), std::move(cores)).balanced();
  }

  // Slice-wise Kronecker product; interior ranks multiply.
  TtTensor hadamard(const TtTensor& other) const {
    check_same_shape(shape_, other.shape_);
    const int d = shape_.order();
    std::vector<int> ranks(d + 1);
    for (int nu = 0; nu <= d; ++nu) ranks[nu] = ranks_[nu] * other.ranks_[nu];
    std::vector<std::vector<double>> cores(d);
    for (int nu = 0; nu < d; ++nu) {
      const std::int64_t m_sz = shape_.mode_size(nu);
      const int rup = ranks_[nu], run = ranks_[nu + 1];
      const int rvp = other.ranks_[nu], rvn = other.ranks_[nu + 1];
      const int rp = ranks[nu], rn = ranks[nu + 1];
      cores[nu].resize(static_cast<std::size_t>(rp) * m_sz * rn);
      for (std::int64_t m = 0; m < m_sz; ++m) {
        Eigen::MatrixXd su = slice(nu, m);
        Eigen::MatrixXd sv = other.slice(nu, m);
        for (int au = 0; au < rup; ++au)
          for (int av = 0; av < rvp; ++av)
            for (int bu = 0; bu < run; ++bu)
              for (int bv = 0; bv < rvn; ++bv) {
                const int a = au * rvp + av;
                const int b = bu * rvn + bv;
                cores[nu][a + static_cast<std::size_t>(rp) * (m + m_sz * b)] =
                    su(au, bu) * sv(av, bv);
              }
      }
    }
    return TtTensor(shape_, std::move(ranks), std::move(cores)).balanced();
  }

  // Left-to-right contraction of paired cores.
  double inner(const TtTensor& other) const {
    check_same_shape(shape_, other.shape_);
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(1, 1);
    for (int nu = 0; nu < shape_.order(); ++nu) {
      Eigen::MatrixXd next =
          Eigen::MatrixXd::Zero(ranks_[nu + 1], other.ranks_[nu + 1]);
      for (std::int64_t m = 0; m < shape_.mode_size(nu); ++m)
        next += slice(nu, m).transpose() * x * other.slice(nu, m);
      x = std::move(next);
    }
    return x(0, 0);
  }

  double norm() const { return std::sqrt(std::max(0.0, inner(*this))); }

  // Right-to-left QR sweep; afterwards all cores but the first have
  // orthonormal right unfoldings.
  TtTensor right_orthogonalized() const {
    TtTensor out = *this;
    const int d = shape_.order();
    for (int nu = d - 1; nu >= 1; --nu) {
      const Eigen::MatrixXd rt = out.right_unfolding(nu).transpose();
      Eigen::HouseholderQR<Eigen::MatrixXd> qr(rt);
      const int k = static_cast<int>(std::min(rt.rows(), rt.cols()));
      Eigen::MatrixXd q = qr.householderQ() *
                          Eigen::MatrixXd::Identity(rt.rows(), k);
      Eigen::MatrixXd rfac = qr.matrixQR()
                                 .topRows(k)
                                 .template triangularView<Eigen::Upper>();
      // new core nu = Q^T, absorbed factor goes left
      Eigen::MatrixXd qc = q.transpose();  // k x (M*r_next)
      std::vector<double> core(qc.size());
      Eigen::Map<Eigen::MatrixXd>(core.data(), qc.rows(), qc.cols()) = qc;
      Eigen::MatrixXd lprev = out.left_unfolding(nu - 1) * rfac.transpose();
      std::vector<double> prev(lprev.size());
      Eigen::Map<Eigen::MatrixXd>(prev.data(), lprev.rows(), lprev.cols()) =
          lprev;
      out.cores_[nu] = std::move(core);
      out.cores_[nu - 1] = std::move(prev);
      out.ranks_[nu] = k;
    }
    return out;
  }

  // Deterministic SVD rounding with per-mode cutoff eps*||w||/sqrt(d-1).
  TtTensor truncated(const TruncationPolicy& policy,
                     TruncationInfo* info = nullptr) const {
    if (info) *info = TruncationInfo{};
    const int d = shape_.order();
    TtTensor out = right_orthogonalized();
    const double nw = out.right_unfolding(0).norm();
    if (nw == 0.0) return zero(shape_);
    if (d == 1) return out;
    const double delta = policy.epsilon * nw / std::sqrt(double(d - 1));
    const int cap = policy.max_rank.value_or(std::numeric_limits<int>::max());
    double discarded2 = 0.0;
    bool miss = false;
    for (int nu = 0; nu < d - 1; ++nu) {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(
          out.left_unfolding(nu), Eigen::ComputeThinU | Eigen::ComputeThinV);
      const auto& sv = svd.singularValues();
      const double drop_floor =
          sv.size() ? sv(0) * 1e-14 : 0.0;  // exact-zero cleanup
      int k = static_cast<int>(sv.size());
      double tail2 = 0.0;
      while (k > 1) {
        const double s = sv(k - 1);
        if (s <= drop_floor || tail2 + s * s <= delta * delta) {
          tail2 += s * s;
          --k;
        } else {
          break;
        }
      }
      if (k > cap) {
        for (int i = cap; i < k; ++i) tail2 += sv(i) * sv(i);
        k = cap;
        miss = true;
      }
      discarded2 += tail2;
      Eigen::MatrixXd u = svd.matrixU().leftCols(k);
      Eigen::MatrixXd carry = sv.head(k).asDiagonal() *
                              svd.matrixV().leftCols(k).transpose();
      std::vector<double> core(u.size());
      Eigen::Map<Eigen::MatrixXd>(core.data(), u.rows(), u.cols()) = u;
      Eigen::MatrixXd rnext = carry * out.right_unfolding(nu + 1);
      std::vector<double> next(rnext.size());
      Eigen::Map<Eigen::MatrixXd>(next.data(), rnext.rows(), rnext.cols()) =
          rnext;
      out.cores_[nu] = std::move(core);
      out.cores_[nu + 1] = std::move(next);
      out.ranks_[nu + 1] = k;
    }
    if (info) {
      info->tolerance_miss = miss && discarded2 > delta * delta * (d - 1);
      info->achieved_error_est = std::sqrt(discarded2);
    }
    return out.balanced();
  }

  // Greedy left-to-right index extraction for near-rank-one tensors.
  MultiIndex dominant_index() const {
    MultiIndex m(shape_.order());
    Eigen::RowVectorXd l = Eigen::RowVectorXd::Ones(1);
    for (int nu = 0; nu < shape_.order(); ++nu) {
      double best = -1.0;
      Eigen::RowVectorXd best_vec;
      std::int64_t best_m = 0;
      for (std::int64_t i = 0; i < shape_.mode_size(nu); ++i) {
        Eigen::RowVectorXd cand = l * slice(nu, i);
        const double score = cand.norm();
        if (score > best) {
          best = score;
          best_vec = cand;
          best_m = i;
        }
      }
      m[nu] = best_m;
      l = (best > 0) ? Eigen::RowVectorXd(best_vec / best) : best_vec;
    }
    return m;
  }

  DenseTensor to_dense() const {
    const std::int64_t n = shape_.total_size_checked(dense_cap());
    const int d = shape_.order();
    std::vector<double> vals(n);
    // running prefix contractions along a row-major odometer
    std::vector<Eigen::RowVectorXd> prefix(d + 1);
    prefix[0] = Eigen::RowVectorXd::Ones(1);
    MultiIndex m(d, 0);
    for (int nu = 0; nu < d; ++nu) prefix[nu + 1] = prefix[nu] * slice(nu, 0);
    for (std::int64_t lin = 0;; ++lin) {
      vals[lin] = prefix[d](0);
      int nu = d - 1;
      for (; nu >= 0; --nu) {
        if (++m[nu] < shape_.mode_size(nu)) break;
        m[nu] = 0;
      }
      if (nu < 0) break;
      for (int k = nu; k < d; ++k) prefix[k + 1] = prefix[k] * slice(k, m[k]);
    }
    return DenseTensor(shape_, std::move(vals));
  }

 private:
  Shape shape_;
  std::vector<int> ranks_;
  std::vector<std::vector<double>> cores_;
};

}  // namespace hadalg

#endif  // HADALG_TT_HPP
