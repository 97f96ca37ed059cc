// Core algebra: shapes, iteration scaffolding, dense reference backend, and
// the CP / TT compressed backends, checked against the dense oracle.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "hadalg/cp.hpp"
#include "hadalg/dense.hpp"
#include "hadalg/generate.hpp"
#include "hadalg/iteration.hpp"
#include "hadalg/tt.hpp"

using namespace hadalg;

namespace {

DenseTensor dense1(std::vector<double> v) {
  Shape s({static_cast<std::int64_t>(v.size())});
  return DenseTensor(s, std::move(v));
}

double max_abs_diff(const DenseTensor& a, const DenseTensor& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::int64_t i = 0; i < a.shape().total_size_double(); ++i)
    m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

CpTensor rank1_cp(const std::vector<std::vector<double>>& mode_vectors) {
  std::vector<Eigen::MatrixXd> f;
  std::vector<std::int64_t> sizes;
  for (const auto& v : mode_vectors) {
    Eigen::MatrixXd m(v.size(), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m(i, 0) = v[i];
    f.push_back(std::move(m));
    sizes.push_back(static_cast<std::int64_t>(v.size()));
  }
  return CpTensor(Shape(sizes), std::move(f));
}

}  // namespace

// ---------------------------------------------------------------- iteration

TEST_CASE("fixed point of the identity map converges in one step") {
  DenseTensor v0 = dense1({1.0, -2.0, 0.5});
  TruncationPolicy pol(1e-10, std::nullopt, 1000);
  StoppingRule stop(StopKind::RelativeStep, 1e-8, 0, 50);
  auto [v, rep] = truncated_fixed_point(
      [](const DenseTensor& v) { return v; }, v0, pol, stop);
  CHECK(rep.converged);
  CHECK(rep.iterations == 1);
  CHECK(rep.step_history[0].delta == 0.0);
  CHECK(max_abs_diff(v, v0) == 0.0);
}

TEST_CASE("Newton-Schulz on a scalar-like tensor reaches 1") {
  DenseTensor v0 = dense1({0.5});
  DenseTensor one = DenseTensor::unit(v0.shape());
  TruncationPolicy pol(1e-12, std::nullopt, 1000);
  StoppingRule stop(StopKind::RelativeStep, 1e-12, 0, 20);
  auto phi = [&](const DenseTensor& v) {
    // v <- v (3*1 - v^2) / 2
    return v.hadamard(one.scaled(3.0).plus(v.hadamard(v).scaled(-1.0)))
        .scaled(0.5);
  };
  auto [v, rep] = truncated_fixed_point(phi, v0, pol, stop);
  CHECK(rep.converged);
  CHECK(rep.iterations <= 8);
  CHECK(v.values()[0] == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("power step iteration converges with linear rate lambda2/lambda1") {
  DenseTensor w = dense1({1.0, 3.0, -2.0});
  DenseTensor v0 = DenseTensor::unit(w.shape()).scaled(1.0 / std::sqrt(3.0));
  TruncationPolicy pol(1e-12, std::nullopt, 1000);
  StoppingRule stop(StopKind::RelativeStep, 1e-9, 0, 200);
  auto phi = [&](const DenseTensor& v) {
    DenseTensor u = w.hadamard(v);
    return u.scaled(1.0 / u.norm());
  };
  auto [v, rep] = truncated_fixed_point(phi, v0, pol, stop);
  CHECK(rep.converged);
  // dominant-modulus entry is 3 at (0-based) index 1
  CHECK(std::abs(v.values()[1]) == doctest::Approx(1.0).epsilon(1e-6));
  // delta ratio approaches |lambda2 / lambda1| = 2/3
  const auto& h = rep.step_history;
  REQUIRE(h.size() >= 6);
  const double ratio = h[h.size() - 2].delta / h[h.size() - 3].delta;
  CHECK(ratio == doctest::Approx(2.0 / 3.0).epsilon(0.05));
}

TEST_CASE("residual stopping rule") {
  CHECK(residual_stop(0.0, 1e-8));
  CHECK_FALSE(residual_stop(1e-3, 1e-8));
  // Newton-Schulz residual v (.) v - 1 at v = 0.9999999
  DenseTensor v = dense1({0.9999999});
  DenseTensor res = v.hadamard(v).plus(DenseTensor::unit(v.shape()).scaled(-1.0));
  CHECK(residual_stop(res, 1e-6));
  CHECK_THROWS_AS(residual_stop(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("relative step stopping rule arithmetic") {
  DenseTensor a = dense1({1.0}), b = dense1({2.0}), c = dense1({0.5});
  CHECK(step_stop(a, a, 1e-12, 0));  // delta = 0 for any eta
  double delta = 0.0;
  CHECK(step_stop(a, b, 0.6, 0, &delta));  // delta = 0.5 < 0.6
  CHECK(delta == doctest::Approx(0.5));
  CHECK(step_stop(a, b, 0.6, 1));   // threshold 2 * 0.6 = 1.2 > 0.5
  CHECK_FALSE(step_stop(a, c, 0.6, 1, &delta));  // delta = 1, thr 0.3
  CHECK(delta == doctest::Approx(1.0));
}

TEST_CASE("state functional is the sum of all entries") {
  Shape s({2, 2, 2});
  CHECK(state_functional(DenseTensor::unit(s)) == doctest::Approx(8.0));
  CHECK(state_functional(DenseTensor::zero(s)) == 0.0);
  CHECK(state_functional(dense1({1, 2, 3})) == doctest::Approx(6.0));
  CHECK(state_functional(CpTensor::unit(s)) == doctest::Approx(8.0));
  CHECK(state_functional(TtTensor::unit(s)) == doctest::Approx(8.0));
}

// ------------------------------------------------------------------- dense

TEST_CASE("dense Hadamard product and unit law") {
  DenseTensor w = dense1({1, 2, 3});
  CHECK(max_abs_diff(w.hadamard(DenseTensor::unit(w.shape())), w) == 0.0);
  DenseTensor a = dense1({1, 2}), b = dense1({5, 6});
  DenseTensor p = a.hadamard(b);
  CHECK(p.values()[0] == 5.0);
  CHECK(p.values()[1] == 12.0);
  // eigen-relation w (.) e^(m) = w_m e^(m)
  DenseTensor w2 = dense1({4, 7});
  DenseTensor e = DenseTensor::basis(w2.shape(), {1});
  DenseTensor we = w2.hadamard(e);
  CHECK(we.values()[0] == 0.0);
  CHECK(we.values()[1] == 7.0);
}

TEST_CASE("dense inner products") {
  CHECK(dense1({1, 2, 3}).inner(DenseTensor::unit(Shape({3}))) ==
        doctest::Approx(6.0));
  CHECK(dense1({1, 1}).inner(dense1({1, -1})) == 0.0);
  CHECK(dense1({1, 2}).inner(dense1({3, 4})) == doctest::Approx(11.0));
}

TEST_CASE("dense argmax") {
  auto [idx, val] = dense1({1, 3, -2}).argmax();
  CHECK(idx == MultiIndex{1});
  CHECK(val == 3.0);
  auto [idx2, val2] = DenseTensor::unit(Shape({2, 2})).argmax();
  CHECK(idx2 == MultiIndex{0, 0});  // tie rule: first index
  // Poisson RHS samples on a 5-point grid peak at the center
  DenseTensor f = poisson_rhs_dense(5, 3);
  auto [idx3, val3] = f.argmax();
  CHECK(idx3 == MultiIndex{2, 2, 2});
}

TEST_CASE("dense level count") {
  CHECK(dense1({0.1, 0.5, 0.9}).level_count(Interval(
            -std::numeric_limits<double>::infinity(), 0.6)) == BigInt(2));
  CHECK_THROWS_AS(Interval(0.5, 0.5), std::invalid_argument);
  CHECK(DenseTensor::unit(Shape({2, 2, 2})).level_count(Interval(0, 2)) ==
        BigInt(8));
}

TEST_CASE("dense mean and variance") {
  auto [m, v] = dense1({1, 2, 3}).mean_var();
  CHECK(m == doctest::Approx(2.0));
  CHECK(v == doctest::Approx(2.0 / 3.0));
  auto [mc, vc] = DenseTensor::unit(Shape({4})).scaled(3.0).mean_var();
  CHECK(mc == doctest::Approx(3.0));
  CHECK(vc == doctest::Approx(0.0));
  // affine transform: mean -> a*mean+b, var -> a^2*var
  DenseTensor w = dense1({1, 2, 3}).scaled(2.0).plus(
      DenseTensor::unit(Shape({3})));
  auto [ma, va] = w.mean_var();
  CHECK(ma == doctest::Approx(5.0));
  CHECK(va == doctest::Approx(8.0 / 3.0));
}

TEST_CASE("dense spectrum is sorted by modulus") {
  CHECK(dense1({1, 3, -2}).spectrum() == std::vector<double>{3, -2, 1});
  CHECK(DenseTensor::unit(Shape({2, 2})).spectrum() ==
        std::vector<double>{1, 1, 1, 1});
}

TEST_CASE("named samplers") {
  Shape s22({2, 2});
  auto one = named_sampler("one", s22);
  CHECK(one({0, 1}) == 1.0);
  auto cs = named_sampler("coordinate-sum", s22);
  CHECK(cs({0, 0}) == 0.0);
  CHECK(cs({0, 1}) == 1.0);
  CHECK(cs({1, 0}) == 1.0);
  CHECK(cs({1, 1}) == 2.0);
  // Poisson sampler agrees with the dense constructor
  Shape s553({5, 5, 5});
  auto ps = named_sampler("poisson-rhs", s553);
  DenseTensor f = poisson_rhs_dense(5, 3);
  CHECK(ps({2, 2, 2}) == doctest::Approx(f.entry({2, 2, 2})).epsilon(1e-14));
  CHECK_THROWS(named_sampler("no-such", s22));
}

// ---------------------------------------------------------------------- CP

TEST_CASE("cp scaling distributes magnitude over modes") {
  CpTensor ones = CpTensor::unit(Shape({2, 2, 2}));
  CpTensor w = ones.scaled(8.0);
  for (int nu = 0; nu < 3; ++nu) {
    CHECK(w.factors()[nu](0, 0) == doctest::Approx(2.0));
    CHECK(w.factors()[nu](1, 0) == doctest::Approx(2.0));
  }
  CHECK(w.entry({0, 1, 1}) == doctest::Approx(8.0));
  CHECK(max_abs_diff(ones.scaled(1.0).to_dense(), ones.to_dense()) == 0.0);
  CpTensor neg = ones.scaled(-8.0);
  CHECK(neg.factors()[0](0, 0) == doctest::Approx(-2.0));
  CHECK(neg.factors()[1](0, 0) == doctest::Approx(2.0));
  CHECK(neg.entry({1, 0, 1}) == doctest::Approx(-8.0));
}

TEST_CASE("cp addition concatenates terms") {
  CpTensor u = rank1_cp({{1, 0}, {1, 1}});
  CHECK(max_abs_diff(u.plus(CpTensor::zero(u.shape())).to_dense(),
                     u.to_dense()) == 0.0);
  CpTensor v = rank1_cp({{0, 1}, {2, 0}});
  CpTensor s = u.plus(v);
  CHECK(s.rank() == 2);
  CHECK(s.entry({0, 0}) == doctest::Approx(1.0));  // 1-based (1,1)
  CHECK(s.entry({1, 0}) == doctest::Approx(2.0));  // 1-based (2,1)
  // rank bookkeeping r_u + r_v
  std::mt19937_64 rng(7);
  CpTensor a = random_cp(Shape({3, 3}), 3, 1);
  CpTensor b = random_cp(Shape({3, 3}), 5, 2);
  CHECK(a.plus(b).rank() == 8);
}

TEST_CASE("cp hadamard multiplies termwise") {
  CpTensor w = random_cp(Shape({2, 3, 2}), 2, 3);
  CHECK(max_abs_diff(w.hadamard(CpTensor::unit(w.shape())).to_dense(),
                     w.to_dense()) < 1e-12);
  CpTensor a = rank1_cp({{1, 2}, {3, 4}});
  CpTensor b = rank1_cp({{5, 6}, {7, 8}});
  CpTensor p = a.hadamard(b);
  CHECK(p.rank() == 1);
  CHECK(max_abs_diff(p.to_dense(), a.to_dense().hadamard(b.to_dense())) <
        1e-12);
  CHECK(p.entry({0, 0}) == doctest::Approx(5.0 * 21.0));
  CpTensor u2 = random_cp(Shape({3, 3}), 2, 4);
  CpTensor v3 = random_cp(Shape({3, 3}), 3, 5);
  CHECK(u2.hadamard(v3).rank() == 6);
}

TEST_CASE("cp inner product") {
  CpTensor a = rank1_cp({{1, 1}, {1, 1}});
  CpTensor b = rank1_cp({{1, 2}, {3, 4}});
  CHECK(a.inner(b) == doctest::Approx(21.0));
  CHECK(b.inner(CpTensor::zero(b.shape())) == 0.0);
  CpTensor w = random_cp(Shape({3, 3, 3}), 3, 6);
  CpTensor v = random_cp(Shape({3, 3, 3}), 3, 7);
  CHECK(w.inner(v) ==
        doctest::Approx(w.to_dense().inner(v.to_dense())).epsilon(1e-12));
}

TEST_CASE("cp entries") {
  Shape s({2, 2});
  CHECK(CpTensor::unit(s).entry({1, 0}) == 1.0);
  CpTensor sum = rank1_cp({{1, 0}, {1, 1}}).plus(rank1_cp({{0, 1}, {2, 0}}));
  CHECK(sum.entry({0, 0}) == doctest::Approx(1.0));
  CpTensor w = random_cp(Shape({3, 4, 2}), 4, 8);
  DenseTensor d = w.to_dense();
  std::mt19937_64 rng(9);
  for (int t = 0; t < 50; ++t) {
    MultiIndex m{static_cast<std::int64_t>(rng() % 3),
                 static_cast<std::int64_t>(rng() % 4),
                 static_cast<std::int64_t>(rng() % 2)};
    CHECK(w.entry(m) == doctest::Approx(d.entry(m)).epsilon(1e-13));
  }
}

TEST_CASE("cp unit tensor") {
  CpTensor u = CpTensor::unit(Shape({2, 3}));
  CHECK(u.rank() == 1);
  const DenseTensor ud = u.to_dense();
  for (double x : ud.values()) CHECK(x == 1.0);
  CHECK(state_functional(u) == doctest::Approx(6.0));
  CHECK(max_abs_diff(u.hadamard(u).to_dense(), u.to_dense()) < 1e-12);
}

TEST_CASE("cp truncation") {
  TruncationPolicy exact0(0.0, std::nullopt, 1);
  // duplicate-term representation of a rank-1 tensor collapses losslessly
  CpTensor dup = rank1_cp({{1, 2}, {3, 4}}).plus(rank1_cp({{1, 2}, {3, 4}}));
  TruncationPolicy pol1(1e-12, 1, 1);
  TruncationInfo info;
  CpTensor t1 = dup.truncated(pol1, &info);
  CHECK(t1.rank() == 1);
  CHECK(max_abs_diff(t1.to_dense(), dup.to_dense()) < 1e-12);
  CHECK_FALSE(info.tolerance_miss);

  // eps = 0 recompression is exact
  CpTensor w = random_cp(Shape({3, 3, 3}), 3, 11);
  CpTensor t2 = w.truncated(TruncationPolicy(0.0, 3, 1));
  CHECK(max_abs_diff(t2.to_dense(), w.to_dense()) <=
        1e-10 * w.to_dense().norm());

  // Hadamard product whose true rank is lower than the representation rank
  CpTensor a = random_cp(Shape({3, 3}), 2, 12);
  CpTensor prod = a.hadamard(CpTensor::unit(a.shape()).plus(a));  // rank 6 repr
  TruncationPolicy pol3(1e-8, std::nullopt, 1);
  CpTensor t3 = prod.truncated(pol3, &info);
  CHECK(t3.rank() < prod.rank());
  CHECK(max_abs_diff(t3.to_dense(), prod.to_dense()) <=
        1e-7 * prod.to_dense().norm());
}

TEST_CASE("cp to dense") {
  CHECK(max_abs_diff(CpTensor::unit(Shape({2, 2})).to_dense(),
                     DenseTensor::unit(Shape({2, 2}))) == 0.0);
  CpTensor s = rank1_cp({{1, 0}, {1, 1}}).plus(rank1_cp({{0, 1}, {2, 0}}));
  DenseTensor d = s.to_dense();  // row-major [[1,1],[2,0]]
  CHECK(d.values() == std::vector<double>{1, 1, 2, 0});
  CpTensor w = random_cp(Shape({3, 3, 3}), 3, 13);
  CpTensor back = CpTensor::from_dense_exact(w.to_dense());
  CHECK(max_abs_diff(back.to_dense(), w.to_dense()) <= 1e-12);
}

// ---------------------------------------------------------------------- TT

TEST_CASE("tt unit and rank bookkeeping") {
  TtTensor u = TtTensor::unit(Shape({2, 2, 2}));
  CHECK(u.tt_ranks() == std::vector<int>{1, 1, 1, 1});
  const DenseTensor ud = u.to_dense();
  for (double x : ud.values()) CHECK(x == 1.0);

  TtTensor a = random_tt(Shape({3, 3, 3}), 2, 21);
  TtTensor b = random_tt(Shape({3, 3, 3}), 3, 22);
  TtTensor s = a.plus(b);
  CHECK(s.tt_ranks()[1] == a.tt_ranks()[1] + b.tt_ranks()[1]);
  CHECK(s.tt_ranks()[2] == a.tt_ranks()[2] + b.tt_ranks()[2]);
  CHECK(max_abs_diff(s.to_dense(), a.to_dense().plus(b.to_dense())) < 1e-12);

  TtTensor p = a.hadamard(b);
  CHECK(p.tt_ranks()[1] == a.tt_ranks()[1] * b.tt_ranks()[1]);
  CHECK(max_abs_diff(p.to_dense(), a.to_dense().hadamard(b.to_dense())) <
        1e-12);
}

TEST_CASE("tt truncation") {
  // rank-inflated unit returns to all-1 ranks at eps = 0
  TtTensor u = TtTensor::unit(Shape({2, 2, 2}));
  TtTensor inflated = u.plus(TtTensor::zero(u.shape()));
  CHECK(inflated.tt_ranks()[1] == 2);
  TtTensor back = inflated.truncated(TruncationPolicy(0.0, std::nullopt, 1));
  CHECK(back.tt_ranks() == std::vector<int>{1, 1, 1, 1});
  CHECK(max_abs_diff(back.to_dense(), u.to_dense()) < 1e-12);

  // Hadamard square: ranks multiply, rounding recovers the square's ranks
  TtTensor a = random_tt(Shape({3, 3, 3}), 2, 23);
  TtTensor sq = a.hadamard(a);
  CHECK(sq.tt_ranks()[1] == 4);
  TtTensor r = sq.truncated(TruncationPolicy(1e-12, std::nullopt, 1));
  CHECK(r.tt_ranks()[1] <= 4);
  CHECK(max_abs_diff(r.to_dense(), sq.to_dense()) <=
        1e-10 * sq.to_dense().norm());

  // binding rank cap: flagged, and the error equals the SVD tail
  TtTensor two = random_tt(Shape({4, 4}), 2, 24);
  TruncationInfo info;
  TtTensor r1 = two.truncated(TruncationPolicy(1e-14, 1, 1), &info);
  Eigen::MatrixXd m(4, 4);
  DenseTensor d2 = two.to_dense();
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) m(i, j) = d2.values()[i * 4 + j];
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  double tail = 0.0;
  for (int k = 1; k < svd.singularValues().size(); ++k)
    tail += svd.singularValues()(k) * svd.singularValues()(k);
  tail = std::sqrt(tail);
  if (tail > 1e-13) CHECK(info.tolerance_miss);
  const double err = r1.to_dense().plus(d2.scaled(-1.0)).norm();
  CHECK(err == doctest::Approx(tail).epsilon(1e-8));
}

TEST_CASE("tt from cp") {
  TtTensor u = TtTensor::from_cp(CpTensor::unit(Shape({2, 2, 2})))
                   .truncated(TruncationPolicy(0.0, std::nullopt, 1));
  CHECK(u.tt_ranks() == std::vector<int>{1, 1, 1, 1});
  CpTensor w = random_cp(Shape({3, 3, 3}), 3, 31);
  TtTensor t = TtTensor::from_cp(w);
  CHECK(max_abs_diff(t.to_dense(), w.to_dense()) <= 1e-12);
}

TEST_CASE("tt core balancing is a pure gauge change") {
  TtTensor a = random_tt(Shape({3, 4, 3}), 2, 41);
  TtTensor huge = a.scaled(1e150).scaled(1e-150);
  CHECK(max_abs_diff(huge.to_dense(), a.to_dense()) <=
        1e-12 * a.to_dense().norm());
  // squaring a balanced iterate stays finite even at extreme entry scales
  TtTensor w = poisson_rhs_tt(100, 50);
  TtTensor v = w.scaled(1.0 / w.norm());
  for (int i = 0; i < 25; ++i) {
    TtTensor u = v.hadamard(v);
    const double nu2 = u.inner(u);
    REQUIRE(std::isfinite(nu2));
    REQUIRE(nu2 > 0.0);
    v = u.scaled(1.0 / std::sqrt(nu2))
            .truncated(TruncationPolicy(1e-8, 3, 3));
  }
}

// ----------------------------------------------------------- Poisson forms

TEST_CASE("poisson rhs: CP, TT and dense constructions agree") {
  for (auto [n, d] : std::vector<std::pair<std::int64_t, int>>{
           {5, 3}, {4, 4}, {6, 2}, {3, 6}}) {
    CpTensor cp = poisson_rhs_cp(n, d);
    CHECK(cp.rank() == d);
    TtTensor tt = poisson_rhs_tt(n, d);
    DenseTensor ref = poisson_rhs_dense(n, d);
    CHECK(max_abs_diff(cp.to_dense(), ref) <= 1e-14);
    CHECK(max_abs_diff(tt.to_dense(), ref) <= 1e-14);
    CHECK(tt.representation_rank() <= 2);
  }
}
