#ifndef HADALG_POSTPROC_HPP
#define HADALG_POSTPROC_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hadalg/iteration.hpp"
#include "hadalg/shape.hpp"

namespace hadalg {

enum class SignMode { NewtonSchulz, RobertsNewton };
enum class ExtremeKind { Max, Min };
enum class EigenMethod { Power, PowerRq, ExpPower };

template <class Element>
struct ExtremeResult {
  double value = 0.0;
  MultiIndex index;
  double error_bound = 0.0;
  IterationReport report;
  std::optional<Element> eigenvector;
  bool converged = false;
};

template <class Element>
struct PowerStepResult {
  Element next;
  double gamma = 0.0;
  double rho1 = 0.0;
  double rho2 = 0.0;
  double eps_lambda = 0.0;
};

struct KbBound {
  double rho1 = 0.0;
  double eps_lambda = 0.0;
};

struct Cardinality {
  double raw = 0.0;
  BigInt count;
};

namespace detail {

template <class Element>
Element maybe_truncate(const Element& z, const TruncationPolicy& policy) {
  return z.representation_rank() > policy.trigger_rank ? z.truncated(policy)
                                                       : z;
}

}  // namespace detail

// --- single eigen-iteration steps (power, power+RQ, exponentiated) ---

template <class Element>
PowerStepResult<Element> power_step(const Element& w, const Element& v) {
  Element u = w.hadamard(v);
  const double nu = u.norm();
  if (!(nu > 0.0))
    throw StagnationSignal("power_step: breakdown, w (.) v vanished");
  PowerStepResult<Element> out{u.scaled(1.0 / nu)};
  out.gamma = 1.0 / nu;
  return out;
}

template <class Element>
PowerStepResult<Element> power_rq_step(const Element& w, const Element& v) {
  Element u = w.hadamard(v);
  const double rho1 = u.inner(v);
  const double rho2 = u.inner(u);
  if (!(rho2 > 0.0))
    throw StagnationSignal("power_rq_step: breakdown, rho2 <= 0");
  PowerStepResult<Element> out{u.scaled(1.0 / std::sqrt(rho2))};
  out.rho1 = rho1;
  out.rho2 = rho2;
  out.eps_lambda = std::sqrt(std::max(0.0, rho2 - rho1 * rho1));
  out.gamma = 1.0 / std::sqrt(rho2);
  return out;
}

// y = w (.) w kept fixed across steps; v_i is proportional to w^(.)2^i.
template <class Element>
PowerStepResult<Element> exp_power_step(const Element& w, const Element& y,
                                        const Element& v) {
  Element u = v.hadamard(v);
  const double rho1 = w.inner(u);
  const double rho2 = y.inner(u);
  const double nu2 = u.inner(u);
  if (!(nu2 > 0.0))
    throw StagnationSignal("exp_power_step: breakdown, v (.) v vanished");
  PowerStepResult<Element> out{u.scaled(1.0 / std::sqrt(nu2))};
  out.rho1 = rho1;
  out.rho2 = rho2;
  out.eps_lambda = std::sqrt(std::max(0.0, rho2 - rho1 * rho1));
  out.gamma = 1.0 / std::sqrt(nu2);
  return out;
}

template <class Element>
KbBound kb_bound(const Element& w, const Element& v) {
  Element u = w.hadamard(v);
  const double rho1 = u.inner(v);
  const double rho2 = u.inner(u);
  return {rho1, std::sqrt(std::max(0.0, rho2 - rho1 * rho1))};
}

namespace detail {

template <class Element>
struct ModulusMaxResult {
  double lambda = 0.0;  // signed RQ estimate of the modulus-max entry
  MultiIndex index;
  double eps_lambda = 0.0;
  IterationReport report;
  std::optional<Element> eigenvector;
  bool converged = false;
};

// Largest-modulus entry of w via truncated power-type iteration.
template <class Element>
ModulusMaxResult<Element> modulus_max(const Element& w, EigenMethod method,
                                      const TruncationPolicy& policy,
                                      const StoppingRule& stop,
                                      const std::vector<MultiIndex>& deflate) {
  const Shape& shape = w.shape();

  // deflation through the starting vector: zero out found indices
  Element base = w;
  if (!deflate.empty()) {
    Element projector = Element::unit(shape);
    for (const auto& m : deflate)
      projector = projector.plus(Element::basis(shape, m).scaled(-1.0));
    base = maybe_truncate(w.hadamard(projector), policy);
  }
  const double bn = base.norm();
  if (!(bn > 0.0)) throw std::runtime_error("modulus_max: zero input");

  double rho1 = 0.0, eps_lambda = 0.0, gamma_inv = 0.0;
  Element v0 = (method == EigenMethod::ExpPower)
                   ? base.scaled(1.0 / bn)
                   : [&] {
                       Element u = Element::unit(shape);
                       if (!deflate.empty())
                         for (const auto& m : deflate)
                           u = u.plus(Element::basis(shape, m).scaled(-1.0));
                       return u.scaled(1.0 / u.norm());
                     }();
  std::optional<Element> y;
  if (method == EigenMethod::ExpPower)
    y = maybe_truncate(base.hadamard(base), policy);

  auto phi = [&](const Element& v) {
    PowerStepResult<Element> s =
        (method == EigenMethod::ExpPower) ? exp_power_step(base, *y, v)
        : (method == EigenMethod::PowerRq)
            ? power_rq_step(base, v)
            : power_step(base, v);
    rho1 = s.rho1;
    eps_lambda = s.eps_lambda;
    gamma_inv = 1.0 / s.gamma;
    return s.next;
  };
  auto [v, report] = truncated_fixed_point(phi, v0, policy, stop);

  ModulusMaxResult<Element> out;
  out.index = v.dominant_index();
  if (method == EigenMethod::Power) {
    // the plain power step has no RQ side-effects; bound computed once
    KbBound kb = kb_bound(base, v);
    out.lambda = kb.rho1;
    out.eps_lambda = kb.eps_lambda;
  } else {
    out.lambda = rho1;
    out.eps_lambda = eps_lambda;
  }
  report.extras["rho1"] = out.lambda;
  report.extras["eps_lambda"] = out.eps_lambda;
  report.extras["gamma_inv"] = gamma_inv;
  out.report = std::move(report);
  out.eigenvector = std::move(v);
  out.converged = out.report.converged;
  return out;
}

}  // namespace detail

// Cheap lower estimate of ||w||_inf via a short exponentiated power run.
template <class Element>
double sup_norm_estimate(const Element& w, const TruncationPolicy& policy) {
  StoppingRule quick(StopKind::RelativeStep, 1e-6, 0, 40);
  auto mr = detail::modulus_max(w, EigenMethod::ExpPower, policy, quick, {});
  return std::max(std::abs(mr.lambda), std::abs(w.entry(mr.index)));
}

// Newton iteration for w^(.)-1: Phi(v) = v (.) (2*1 - w (.) v), quadratic.
// Start v0 = w / ||w||_inf^2 keeps every entry product in (0, 1].
template <class Element>
std::pair<Element, IterationReport> hadamard_inverse(
    const Element& w, const TruncationPolicy& policy,
    const StoppingRule& stop) {
  const Shape& shape = w.shape();
  const Element one = Element::unit(shape);
  const double s = sup_norm_estimate(w, policy);
  if (!(s > 0.0)) throw std::runtime_error("hadamard_inverse: zero input");
  Element v0 = w.scaled(1.0 / (s * s));

  auto phi = [&](const Element& v) {
    Element t = detail::maybe_truncate(w.hadamard(v), policy);
    return v.hadamard(one.scaled(2.0).plus(t.scaled(-1.0)));
  };
  std::function<Element(const Element&)> residual = [&](const Element& v) {
    return detail::maybe_truncate(one.plus(w.hadamard(v).scaled(-1.0)), policy);
  };
  auto [v, report] = truncated_fixed_point(phi, v0, policy, stop, residual);
  report.extras["inverse_residual"] = residual(v).norm();
  return {std::move(v), std::move(report)};
}

// Entrywise sign via Newton-Schulz (default) or Roberts-Newton (reference).
// The iterate is pre-scaled by s = 1.1 * estimated ||w||_inf; on divergence
// the scale is doubled and the run retried.
template <class Element>
std::pair<Element, IterationReport> hadamard_sign(
    const Element& w, const TruncationPolicy& policy, const StoppingRule& stop,
    SignMode mode = SignMode::NewtonSchulz) {
  const Shape& shape = w.shape();
  const Element one = Element::unit(shape);
  double s = 1.1 * sup_norm_estimate(w, policy);
  if (!(s > 0.0)) throw std::runtime_error("hadamard_sign: zero input");

  for (int attempt = 0;; ++attempt) {
    try {
      Element w_scaled = w.scaled(1.0 / s);
      auto phi = [&](const Element& v) {
        if (mode == SignMode::NewtonSchulz) {
          Element q = detail::maybe_truncate(v.hadamard(v), policy);
          return v.hadamard(one.scaled(3.0).plus(q.scaled(-1.0))).scaled(0.5);
        }
        auto [v_inv, inv_report] = hadamard_inverse(v, policy, stop);
        return v.plus(v_inv).scaled(0.5);
      };
      auto [v, report] = truncated_fixed_point(phi, w_scaled, policy, stop);
      Element residual = detail::maybe_truncate(
          one.plus(v.hadamard(v).scaled(-1.0)), policy);
      report.extras["sign_residual"] = residual.norm() / w_scaled.norm();
      report.extras["scale"] = s;
      report.extras["max_iterate_rank"] = report.max_iterate_rank();
      return {std::move(v), std::move(report)};
    } catch (const DivergenceError&) {
      if (attempt >= 3) throw;
      s *= 2.0;  // the sup-norm estimate was too low
    }
  }
}

// Babylonian square root Phi(v) = (v + v^(.)-1 (.) w)/2 for positive w,
// with the inverse tracked by coupled Newton refinement steps.
template <class Element>
std::pair<Element, IterationReport> hadamard_sqrt(
    const Element& w, const TruncationPolicy& policy,
    const StoppingRule& stop) {
  const Shape& shape = w.shape();
  const Element one = Element::unit(shape);
  Element v0 = w.plus(one).scaled(0.5);

  StoppingRule inv_stop(StopKind::Residual, std::min(stop.eta, 1e-10), 0, 60);
  auto [z0, z_report] = hadamard_inverse(v0, policy, inv_stop);
  Element z = z0;  // running approximation of v^(.)-1
  auto phi = [&](const Element& v) {
    for (int k = 0; k < 2; ++k) {
      Element t = detail::maybe_truncate(v.hadamard(z), policy);
      z = detail::maybe_truncate(
          z.hadamard(one.scaled(2.0).plus(t.scaled(-1.0))), policy);
    }
    return v.plus(detail::maybe_truncate(z.hadamard(w), policy)).scaled(0.5);
  };
  std::function<Element(const Element&)> residual = [&](const Element& v) {
    return detail::maybe_truncate(v.hadamard(v).plus(w.scaled(-1.0)), policy);
  };
  auto [v, report] = truncated_fixed_point(phi, v0, policy, stop, residual);
  report.extras["sqrt_residual"] = residual(v).norm() / std::max(w.norm(), 1e-300);
  return {std::move(v), std::move(report)};
}

// chi_S(w) from shifted sign functions, the three interval cases.
template <class Element>
std::pair<Element, IterationReport> characteristic(
    const Element& w, const Interval& s, const TruncationPolicy& policy,
    const StoppingRule& stop) {
  const Shape& shape = w.shape();
  const Element one = Element::unit(shape);
  auto shifted_sign = [&](double omega) {
    return hadamard_sign(one.scaled(omega).plus(w.scaled(-1.0)), policy, stop);
  };

  if (!s.bounded_below() && !s.bounded_above())
    return {one, IterationReport{}};

  Element chi = one;
  IterationReport report;
  if (!s.bounded_below()) {
    auto [sg, rep] = shifted_sign(s.upper);
    chi = one.plus(sg).scaled(0.5);
    report = std::move(rep);
  } else if (!s.bounded_above()) {
    auto [sg, rep] = shifted_sign(s.lower);
    chi = one.plus(sg.scaled(-1.0)).scaled(0.5);
    report = std::move(rep);
  } else {
    auto [sg_hi, rep_hi] = shifted_sign(s.upper);
    auto [sg_lo, rep_lo] = shifted_sign(s.lower);
    chi = sg_hi.plus(sg_lo.scaled(-1.0)).scaled(0.5);
    report = std::move(rep_hi);
    report.iterations += rep_lo.iterations;
    for (auto& st : rep_lo.step_history) report.step_history.push_back(st);
    report.converged = report.converged && rep_lo.converged;
  }
  return {detail::maybe_truncate(chi, policy), std::move(report)};
}

// L_S(w) = chi_S(w) (.) w
template <class Element>
std::pair<Element, IterationReport> level_set(const Element& w,
                                              const Interval& s,
                                              const TruncationPolicy& policy,
                                              const StoppingRule& stop) {
  auto [chi, report] = characteristic(w, s, policy, stop);
  return {detail::maybe_truncate(chi.hadamard(w), policy), std::move(report)};
}

// <chi, 1>, raw and rounded to the nearest integer (half rounds down:
// boundary entries evaluate to 1/2 because sign(0) = 0).
template <class Element>
Cardinality support_cardinality(const Element& chi) {
  Cardinality c;
  c.raw = state_functional(chi);
  c.count = BigInt(std::ceil(c.raw - 0.5));
  return c;
}

template <class Element>
double probability(const Element& w, const Interval& s,
                   const TruncationPolicy& policy, const StoppingRule& stop) {
  auto [chi, report] = characteristic(w, s, policy, stop);
  const double raw = state_functional(chi);
  const double n = w.shape().total_size_double();
  return std::clamp(raw / n, 0.0, 1.0);
}

template <class Element>
std::pair<double, double> mean_variance(const Element& w) {
  const double n = w.shape().total_size_double();
  const double mean = state_functional(w) / n;
  Element wt = w.plus(Element::unit(w.shape()).scaled(-mean));
  const double var = std::max(0.0, wt.inner(wt) / n);
  return {mean, var};
}

template <class Element>
double conditional_mean(const Element& w, const Interval& s,
                        const TruncationPolicy& policy,
                        const StoppingRule& stop) {
  auto [chi, report] = characteristic(w, s, policy, stop);
  const double denom = state_functional(chi);
  if (denom <= 0.5)
    throw std::runtime_error("conditional_mean: empty level set");
  Element ls = detail::maybe_truncate(chi.hadamard(w), policy);
  return state_functional(ls) / denom;
}

// Maximum / minimum of w via (shifted) modulus-max iteration; the returned
// value is the verified entry at the extracted index, the RQ estimate and
// Krylov-Bogolyubov bound ride along in the report.
template <class Element>
ExtremeResult<Element> find_extreme(
    const Element& w, ExtremeKind which,
    EigenMethod method, const TruncationPolicy& policy,
    const StoppingRule& stop,
    std::vector<MultiIndex> deflate = {}) {
  if (which == ExtremeKind::Min) {
    ExtremeResult<Element> res = find_extreme(w.scaled(-1.0), ExtremeKind::Max,
                                              method, policy, stop, deflate);
    res.value = -res.value;
    return res;
  }

  const Shape& shape = w.shape();
  std::optional<ExtremeResult<Element>> best;
  for (int attempt = 0; attempt < 4; ++attempt) {
    auto mr = detail::modulus_max(w, method, policy, stop, deflate);
    double lambda_est = mr.lambda;
    if (lambda_est < 0.0) {
      // modulus-max is the minimum; shift up by beta = -rho and rerun
      const double beta = -lambda_est;
      Element shifted = detail::maybe_truncate(
          w.plus(Element::unit(shape).scaled(beta)), policy);
      auto mr2 = detail::modulus_max(shifted, method, policy, stop, deflate);
      mr2.report.extras["shift"] = beta;
      mr2.lambda -= beta;
      mr = std::move(mr2);
      lambda_est = mr.lambda;
    }
    ExtremeResult<Element> cand;
    cand.index = mr.index;
    cand.value = w.entry(mr.index);
    cand.error_bound = mr.eps_lambda;
    cand.report = std::move(mr.report);
    cand.eigenvector = std::move(mr.eigenvector);
    cand.converged = mr.converged;
    if (!best || cand.value > best->value) best = cand;

    const double tol = std::max(
        {10.0 * cand.error_bound, 1e-6 * std::abs(lambda_est), 1e-12});
    if (std::abs(cand.value - lambda_est) <= tol && cand.converged) break;
    deflate.push_back(cand.index);  // mismatch: exclude and retry
  }
  return *best;
}

// Index of the entry nearest rho: modulus-max of (w - rho*1)^(.)-1.
template <class Element>
ExtremeResult<Element> closest_to(const Element& w, double rho,
                                  const TruncationPolicy& policy,
                                  const StoppingRule& stop) {
  const Shape& shape = w.shape();
  Element shifted = detail::maybe_truncate(
      w.plus(Element::unit(shape).scaled(-rho)), policy);
  bool inverse_converged = true;
  Element y = shifted;
  try {
    auto [inv, rep] = hadamard_inverse(shifted, policy, stop);
    y = std::move(inv);
    inverse_converged = rep.converged;
  } catch (const DivergenceError&) {
    throw std::runtime_error(
        "closest_to: inverse iteration diverged; exact or near-exact hit");
  }
  auto mr = detail::modulus_max(y, EigenMethod::ExpPower, policy, stop, {});
  ExtremeResult<Element> res;
  res.index = mr.index;
  res.value = w.entry(mr.index);
  res.error_bound = mr.eps_lambda;
  res.report = std::move(mr.report);
  res.eigenvector = std::move(mr.eigenvector);
  res.converged = mr.converged && inverse_converged;
  return res;
}

}  // namespace hadalg

#endif  // HADALG_POSTPROC_HPP
