#ifndef HADALG_ITERATION_HPP
#define HADALG_ITERATION_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hadalg {

// Relative truncation tolerance plus rank controls used by T_eps.
struct TruncationPolicy {
  double epsilon = 1e-10;
  std::optional<int> max_rank;
  int trigger_rank = 1;  // compress when representation rank exceeds this

  TruncationPolicy() = default;
  TruncationPolicy(double eps, std::optional<int> maxr, int trigger)
      : epsilon(eps), max_rank(maxr), trigger_rank(trigger) {
    if (epsilon < 0) throw std::invalid_argument("epsilon must be >= 0");
    if (max_rank && *max_rank < 1)
      throw std::invalid_argument("max_rank must be >= 1");
    if (trigger_rank < 1)
      throw std::invalid_argument("trigger_rank must be >= 1");
  }
};

// Side channel from truncation: set when the tolerance could not be met
// because a rank cap was binding.
struct TruncationInfo {
  bool tolerance_miss = false;
  double achieved_error_est = 0.0;
};

enum class StopKind { Residual, RelativeStep };

struct StoppingRule {
  StopKind kind = StopKind::RelativeStep;
  double eta = 1e-10;
  int p_exponent = 0;  // used by RelativeStep only, one of {0,1,2}
  int max_iters = 100;

  StoppingRule() = default;
  StoppingRule(StopKind k, double eta_, int p, int max_it)
      : kind(k), eta(eta_), p_exponent(p), max_iters(max_it) {
    if (eta <= 0) throw std::invalid_argument("eta must be > 0");
    if (max_iters < 1) throw std::invalid_argument("max_iters must be >= 1");
    if (p_exponent < 0 || p_exponent > 2)
      throw std::invalid_argument("p_exponent must be in {0,1,2}");
  }
};

struct IterationStep {
  double delta = 0.0;  // the criterion value checked this step
  int rank_before = 0;
  int rank_after = 0;
  bool truncated = false;
};

struct IterationReport {
  int iterations = 0;
  std::vector<IterationStep> step_history;
  bool converged = false;
  double final_residual = 0.0;
  std::map<std::string, double> extras;

  int max_iterate_rank() const {
    int r = 0;
    for (const auto& s : step_history) r = std::max(r, s.rank_after);
    return r;
  }
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, IterationReport partial)
      : std::runtime_error(what), report(std::move(partial)) {}
  IterationReport report;
};

// Thrown by an iteration map when its internal quantities fall below the
// noise floor of the compressed representation (e.g. an inner product that
// should be positive comes back <= 0 from cancellation).  Inside
// truncated_fixed_point this means the iteration cannot make further
// progress: if at least one step completed, the last iterate is returned as
// a stagnation stop; on the very first step it is re-raised as an error.
class StagnationSignal : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool residual_stop(double residual_norm, double eta) {
  if (eta <= 0) throw std::invalid_argument("residual_stop: eta must be > 0");
  return residual_norm < eta;
}

template <class Element>
bool residual_stop(const Element& f_of_v, double eta) {
  return residual_stop(f_of_v.norm(), eta);
}

// delta_i = ||v_i - v_{i-1}|| / ||v_i|| < ||v_i||^p * eta
template <class Element>
bool step_stop(const Element& v_prev, const Element& v_curr, double eta, int p,
               double* delta_out = nullptr) {
  if (eta <= 0) throw std::invalid_argument("step_stop: eta must be > 0");
  const double nv = v_curr.norm();
  if (nv == 0.0) throw std::runtime_error("step_stop: degenerate iterate");
  const double delta = v_curr.plus(v_prev.scaled(-1.0)).norm() / nv;
  if (delta_out) *delta_out = delta;
  return delta < std::pow(nv, p) * eta;
}

// phi(1) = <w, 1>: the sum of all entries.
template <class Element>
double state_functional(const Element& w) {
  return w.inner(Element::unit(w.shape()));
}

// Fixed-point iteration with truncation between steps.  The truncation
// fires when the representation rank of phi's output exceeds
// policy.trigger_rank.  With a Residual stopping rule a residual map
// v -> F(v) must be supplied.
template <class Element, class Phi>
std::pair<Element, IterationReport> truncated_fixed_point(
    Phi&& phi, const Element& v0, const TruncationPolicy& policy,
    const StoppingRule& stop,
    const std::function<Element(const Element&)>& residual_map = {}) {
  if (stop.kind == StopKind::Residual && !residual_map)
    throw std::invalid_argument(
        "truncated_fixed_point: Residual rule needs a residual map");

  IterationReport report;
  Element v = v0;
  for (int i = 1; i <= stop.max_iters; ++i) {
    std::optional<Element> z_opt;
    try {
      z_opt = phi(v);
    } catch (const StagnationSignal&) {
      if (report.step_history.empty()) throw;  // failed before any progress
      report.converged = true;
      report.extras["stagnated"] = 1.0;
      break;
    }
    Element z = std::move(*z_opt);
    if (!std::isfinite(z.norm())) {
      report.iterations = static_cast<int>(report.step_history.size());
      throw DivergenceError("truncated_fixed_point: non-finite iterate",
                            report);
    }
    IterationStep step;
    step.rank_before = z.representation_rank();
    Element v_next = z;
    if (step.rank_before > policy.trigger_rank) {
      v_next = z.truncated(policy);
      step.truncated = true;
    }
    step.rank_after = v_next.representation_rank();

    bool done = false;
    if (stop.kind == StopKind::RelativeStep) {
      done = step_stop(v, v_next, stop.eta, stop.p_exponent, &step.delta);
    } else {
      step.delta = residual_map(v_next).norm();
      done = residual_stop(step.delta, stop.eta);
    }
    report.step_history.push_back(step);
    report.final_residual = step.delta;
    v = std::move(v_next);
    if (done) {
      report.converged = true;
      break;
    }
  }
  report.iterations = static_cast<int>(report.step_history.size());
  return {v, report};
}

}  // namespace hadalg

#endif  // HADALG_ITERATION_HPP
