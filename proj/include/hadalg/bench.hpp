#ifndef HADALG_BENCH_HPP
#define HADALG_BENCH_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "hadalg/generate.hpp"
#include "hadalg/postproc.hpp"
#include "hadalg/shape.hpp"

namespace hadalg {

struct BenchRow {
  int d = 0;
  std::int64_t n = 0;
  int rank = 0;
  std::string exact_n;  // N = n^d as exact decimal
  std::string task;
  int iterations = 0;
  double wall_seconds = 0.0;
  int final_rank = 0;
  double error_metric = 0.0;
  // extra diagnostics, JSON output only (the CSV column set is frozen)
  int max_iterate_rank = 0;
  bool timed_out = false;
  bool converged = true;
};

inline constexpr const char* kBenchCsvHeader =
    "d,n,rank,N,task,iterations,wall_seconds,final_rank,error_metric";

inline std::string bench_csv_line(const BenchRow& row) {
  char buf[64];
  std::string out = std::to_string(row.d) + "," + std::to_string(row.n) +
                    "," + std::to_string(row.rank) + "," + row.exact_n + "," +
                    row.task + "," + std::to_string(row.iterations) + ",";
  std::snprintf(buf, sizeof(buf), "%.6g", row.wall_seconds);
  out += buf;
  out += "," + std::to_string(row.final_rank) + ",";
  if (row.timed_out) {
    out += "timeout";
  } else {
    std::snprintf(buf, sizeof(buf), "%.6g", row.error_metric);
    out += buf;
  }
  return out;
}

inline std::string exact_total_size(std::int64_t n, int d) {
  BigInt total = 1;
  for (int i = 0; i < d; ++i) total *= n;
  return total.str();
}

// Least-squares slope of log(seconds) against log(d).
inline double fitted_time_exponent(const std::vector<BenchRow>& rows) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int k = 0;
  for (const auto& r : rows) {
    if (!(r.wall_seconds > 0.0)) continue;
    const double x = std::log(static_cast<double>(r.d));
    const double y = std::log(r.wall_seconds);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++k;
  }
  if (k < 2) return 0.0;
  const double denom = k * sxx - sx * sx;
  if (denom == 0.0) return 0.0;
  return (k * sxy - sx * sy) / denom;
}

// Maximum location on the Poisson right-hand side (Table 1 analogue).
// The tensor is held in its exact rank-2 TT form; `rank` caps the iterate
// ranks during truncation.
inline BenchRow bench_max_row(std::int64_t n, int d, int rank, int repeats,
                              double timeout_seconds = 300.0) {
  BenchRow row;
  row.d = d;
  row.n = n;
  row.rank = rank;
  row.exact_n = exact_total_size(n, d);
  row.task = "max";

  TtTensor w = poisson_rhs_tt(n, d);
  TruncationPolicy policy(1e-8, rank, std::max(1, rank));
  StoppingRule stop(StopKind::RelativeStep, 1e-8, 0, 25);

  std::vector<double> times;
  for (int rep = 0; rep < std::max(1, repeats); ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    auto res = find_extreme(w, ExtremeKind::Max, EigenMethod::ExpPower,
                            policy, stop);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
    if (rep == 0) {
      row.iterations = res.report.iterations;
      row.final_rank =
          res.eigenvector ? res.eigenvector->representation_rank() : 0;
      row.error_metric = res.error_bound;
      row.max_iterate_rank = res.report.max_iterate_rank();
      row.converged = res.converged;
    }
    if (times.back() > timeout_seconds) {
      row.timed_out = true;
      break;
    }
  }
  std::sort(times.begin(), times.end());
  row.wall_seconds = times[times.size() / 2];
  return row;
}

// Characteristic-function computation via Newton-Schulz on a synthetic
// banded tensor (Tables 2-3 analogue).  error_metric is the final sign
// residual ||1 - v (.) v|| / ||w_scaled||.
inline BenchRow bench_sign_row(std::int64_t n, int d, int rank, int repeats,
                               double timeout_seconds = 300.0) {
  BenchRow row;
  row.d = d;
  row.n = n;
  row.rank = rank;
  row.exact_n = exact_total_size(n, d);
  row.task = "sign";

  SignBench gen = sign_bench_cp(d, n, rank, 0xbe9c5 + d);
  CpTensor shifted =
      gen.w.plus(CpTensor::unit(gen.w.shape()).scaled(-gen.threshold));
  TruncationPolicy policy(1e-8, 4 * std::max(1, rank),
                          std::max(2, 2 * rank));
  // eta sits above the truncation noise floor (~10*eps per compress) so the
  // quadratic tail can actually trigger the stop
  StoppingRule stop(StopKind::RelativeStep, 1e-6, 0, 30);

  std::vector<double> times;
  for (int rep = 0; rep < std::max(1, repeats); ++rep) {
    const auto t0 = std::chrono::steady_clock::now();
    auto [sg, report] = hadamard_sign(shifted, policy, stop);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
    if (rep == 0) {
      row.iterations = report.iterations;
      row.final_rank = sg.representation_rank();
      row.error_metric = report.extras.count("sign_residual")
                             ? report.extras.at("sign_residual")
                             : 0.0;
      row.max_iterate_rank = report.max_iterate_rank();
      row.converged = report.converged;
    }
    if (times.back() > timeout_seconds) {
      row.timed_out = true;
      break;
    }
  }
  std::sort(times.begin(), times.end());
  row.wall_seconds = times[times.size() / 2];
  return row;
}

inline std::vector<BenchRow> run_bench(const std::string& task,
                                       std::int64_t n,
                                       std::vector<int> d_list, int rank,
                                       int repeats,
                                       double timeout_seconds = 300.0) {
  std::sort(d_list.begin(), d_list.end());
  std::vector<BenchRow> rows;
  for (int d : d_list) {
    if (task == "max") {
      rows.push_back(bench_max_row(n, d, rank, repeats, timeout_seconds));
    } else if (task == "sign") {
      rows.push_back(bench_sign_row(n, d, rank, repeats, timeout_seconds));
    } else {
      throw std::invalid_argument("bench: unknown task " + task);
    }
  }
  return rows;
}

}  // namespace hadalg

#endif  // HADALG_BENCH_HPP
