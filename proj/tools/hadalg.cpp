// hadalg: generate, process, and benchmark tensors held in compressed
// low-rank formats.  Subcommands:
//   gen    write a synthetic tensor file (random-cp, random-tt, poisson-rhs,
//          function-sample)
//   run    execute a post-processing task on a tensor file
//   bench  timing tables for the max / sign tasks, CSV or JSON
//
// Exit codes: 0 success / converged, 1 malformed input or internal error,
// 2 flagged non-convergence.

#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hadalg/bench.hpp"
#include "hadalg/generate.hpp"
#include "hadalg/io.hpp"
#include "hadalg/postproc.hpp"

namespace {

using nlohmann::json;
using namespace hadalg;

json index_to_json_1based(const MultiIndex& m) {
  json a = json::array();
  for (auto v : m) a.push_back(v + 1);  // 1-based in all human-facing output
  return a;
}

std::string index_to_text_1based(const MultiIndex& m) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < m.size(); ++i)
    os << (i ? ", " : "") << m[i] + 1;
  os << ")";
  return os.str();
}

void emit(const json& j, bool as_json) {
  if (as_json) {
    std::cout << j.dump(2) << "\n";
    return;
  }
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::cout << it.key() << ": ";
    if (it->is_string())
      std::cout << it->get<std::string>();
    else
      std::cout << it->dump();
    std::cout << "\n";
  }
}

int representation_rank_of(const AnyTensor& t) {
  return std::visit([](const auto& w) { return w.representation_rank(); }, t);
}

struct RunOptions {
  std::string task;
  std::string in_path;
  std::string out_path;  // optional tensor output for element-valued tasks
  double eps = 1e-8;
  std::optional<int> max_rank;
  std::optional<int> trigger_rank;
  double stop_eta = 1e-8;
  int max_iters = 100;
  bool as_json = false;
  std::optional<double> value;  // closest-to target
  std::optional<double> lower;  // interval bounds for levelset/count/prob
  std::optional<double> upper;
};

Interval make_interval(const RunOptions& opt) {
  const double lo =
      opt.lower ? *opt.lower : -std::numeric_limits<double>::infinity();
  const double hi =
      opt.upper ? *opt.upper : std::numeric_limits<double>::infinity();
  return Interval(lo, hi);
}

void fill_report(json& out, const IterationReport& report) {
  out["iterations"] = report.iterations;
  out["converged"] = report.converged;
  out["final_residual"] = report.final_residual;
  out["max_iterate_rank"] = report.max_iterate_rank();
  for (const auto& [k, v] : report.extras) out[k] = v;
}

// Runs `task` on one backend; returns the process exit code.
template <class Element>
int run_task(const Element& w, const RunOptions& opt,
             std::optional<AnyTensor>* element_out) {
  // default trigger: compress once the rank exceeds twice the input rank
  const int trigger = opt.trigger_rank.value_or(
      std::max(1, 2 * w.representation_rank()));
  TruncationPolicy policy(opt.eps, opt.max_rank, trigger);
  StoppingRule stop(StopKind::RelativeStep, opt.stop_eta, 0, opt.max_iters);

  json out;
  out["task"] = opt.task;
  bool converged = true;

  if (opt.task == "max" || opt.task == "min") {
    auto res = find_extreme(
        w, opt.task == "max" ? ExtremeKind::Max : ExtremeKind::Min,
        EigenMethod::ExpPower, policy, stop);
    out["value"] = res.value;
    out["index"] = index_to_json_1based(res.index);
    out["error_bound"] = res.error_bound;
    fill_report(out, res.report);
    out["converged"] = res.converged;
    if (!opt.as_json) out["index"] = index_to_text_1based(res.index);
    converged = res.converged;
  } else if (opt.task == "closest") {
    if (!opt.value)
      throw std::invalid_argument("task closest requires --value");
    auto res = closest_to(w, *opt.value, policy, stop);
    out["target"] = *opt.value;
    out["value"] = res.value;
    out["index"] = index_to_json_1based(res.index);
    out["error_bound"] = res.error_bound;
    fill_report(out, res.report);
    out["converged"] = res.converged;
    if (!opt.as_json) out["index"] = index_to_text_1based(res.index);
    converged = res.converged;
  } else if (opt.task == "levelset") {
    const Interval s = make_interval(opt);
    auto [y, report] = level_set(w, s, policy, stop);
    out["interval"] = {s.lower, s.upper};
    out["final_rank"] = y.representation_rank();
    fill_report(out, report);
    converged = report.converged;
    if (element_out && !opt.out_path.empty())
      *element_out = AnyTensor(std::move(y));
  } else if (opt.task == "count" || opt.task == "prob") {
    const Interval s = make_interval(opt);
    auto [chi, report] = characteristic(w, s, policy, stop);
    const Cardinality card = support_cardinality(chi);
    out["interval"] = {s.lower, s.upper};
    if (opt.task == "count") {
      out["count"] = card.count.str();
      out["raw"] = card.raw;
    } else {
      out["probability"] = std::clamp(
          card.raw / w.shape().total_size_double(), 0.0, 1.0);
    }
    out["final_rank"] = chi.representation_rank();
    fill_report(out, report);
    converged = report.converged;
  } else if (opt.task == "mean" || opt.task == "var") {
    auto [mean, var] = mean_variance(w);
    out["mean"] = mean;
    if (opt.task == "var") out["variance"] = var;
    out["iterations"] = 0;
    out["converged"] = true;
  } else if (opt.task == "sign" || opt.task == "inv" || opt.task == "sqrt") {
    auto [y, report] = opt.task == "sign" ? hadamard_sign(w, policy, stop)
                       : opt.task == "inv"
                           ? hadamard_inverse(w, policy, stop)
                           : hadamard_sqrt(w, policy, stop);
    out["final_rank"] = y.representation_rank();
    fill_report(out, report);
    converged = report.converged;
    if (element_out && !opt.out_path.empty())
      *element_out = AnyTensor(std::move(y));
  } else {
    throw std::invalid_argument("unknown task: " + opt.task);
  }

  emit(out, opt.as_json);
  return converged ? 0 : 2;
}

int cmd_gen(const std::string& kind, std::int64_t n, int d, int rank,
            std::uint64_t seed, const std::string& function,
            const std::string& out_path, bool text_mode) {
  Shape shape(std::vector<std::int64_t>(d, n));
  AnyTensor t = [&]() -> AnyTensor {
    if (kind == "random-cp") return random_cp(shape, rank, seed);
    if (kind == "random-tt") return random_tt(shape, rank, seed);
    if (kind == "poisson-rhs") return poisson_rhs_cp(n, d);
    if (kind == "function-sample") {
      auto f = named_sampler(function, shape);
      const std::int64_t total = shape.total_size_checked(dense_cap());
      std::vector<double> vals(total);
      MultiIndex m(d, 0);
      for (std::int64_t i = 0; i < total; ++i) {
        vals[i] = f(m);
        for (int nu = d - 1; nu >= 0; --nu) {  // row-major counter
          if (++m[nu] < n) break;
          m[nu] = 0;
        }
      }
      return DenseTensor(shape, std::move(vals));
    }
    throw std::invalid_argument("unknown kind: " + kind);
  }();
  tensor_file::write_file(out_path, t, /*binary=*/!text_mode);
  std::cout << "wrote " << out_path << " (format "
            << std::vector<std::string>{"dense", "cp", "tt"}[t.index()]
            << ", rank " << representation_rank_of(t) << ")\n";
  return 0;
}

int cmd_bench(const std::string& task, std::int64_t n,
              const std::vector<int>& d_list, int rank, int repeats,
              double timeout_seconds, bool csv) {
  std::vector<BenchRow> rows =
      run_bench(task, n, d_list, rank, repeats, timeout_seconds);
  if (csv) {
    std::cout << kBenchCsvHeader << "\n";
    for (const auto& r : rows) std::cout << bench_csv_line(r) << "\n";
  } else {
    json arr = json::array();
    for (const auto& r : rows) {
      json j;
      j["d"] = r.d;
      j["n"] = r.n;
      j["rank"] = r.rank;
      j["N"] = r.exact_n;
      j["task"] = r.task;
      j["iterations"] = r.iterations;
      j["wall_seconds"] = r.wall_seconds;
      j["final_rank"] = r.final_rank;
      j["error_metric"] = r.error_metric;
      j["max_iterate_rank"] = r.max_iterate_rank;
      j["timed_out"] = r.timed_out;
      j["converged"] = r.converged;
      arr.push_back(std::move(j));
    }
    json out;
    out["rows"] = std::move(arr);
    out["fitted_time_exponent"] = fitted_time_exponent(rows);
    std::cout << out.dump(2) << "\n";
  }
  for (const auto& r : rows)
    if (r.timed_out || !r.converged) return 2;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"post-processing of huge tensors in compressed formats"};
  app.require_subcommand(1);

  // --- gen ---
  auto* gen = app.add_subcommand("gen", "generate a tensor file");
  std::string gen_kind, gen_function = "one", gen_out;
  std::int64_t gen_n = 2;
  int gen_d = 1, gen_rank = 1;
  std::uint64_t gen_seed = 0;
  bool gen_text = false;
  gen->add_option("--kind", gen_kind, "random-cp|random-tt|poisson-rhs|function-sample")
      ->required();
  gen->add_option("-n,--mode-size", gen_n, "mode size n")->required();
  gen->add_option("-d,--order", gen_d, "order d")->required();
  gen->add_option("--rank", gen_rank, "representation rank (random kinds)");
  gen->add_option("--seed", gen_seed, "RNG seed (random kinds)");
  gen->add_option("--function", gen_function,
                  "sampler for function-sample: one|coordinate-sum|poisson-rhs");
  gen->add_option("-o,--out", gen_out, "output path")->required();
  gen->add_flag("--json", gen_text, "write JSON text format instead of binary");

  // --- run ---
  auto* run = app.add_subcommand("run", "run a task on a tensor file");
  RunOptions opt;
  run->add_option("--task", opt.task,
                  "max|min|closest|levelset|count|prob|mean|var|sign|inv|sqrt")
      ->required();
  run->add_option("-i,--in", opt.in_path, "input tensor file")->required();
  run->add_option("-o,--out", opt.out_path,
                  "output tensor file (levelset/sign/inv/sqrt)");
  run->add_option("--eps", opt.eps, "truncation tolerance (relative)");
  int run_max_rank = 0, run_trigger = 0;
  auto* mr = run->add_option("--max-rank", run_max_rank, "iterate rank cap");
  auto* tr = run->add_option("--trigger-rank", run_trigger,
                             "compress above this rank (default 2x input)");
  run->add_option("--stop-eta", opt.stop_eta, "stopping tolerance");
  run->add_option("--max-iters", opt.max_iters, "iteration cap");
  double run_value = 0.0, run_lower = 0.0, run_upper = 0.0;
  auto* vo = run->add_option("--value", run_value, "target value (closest)");
  auto* lo = run->add_option("--lower", run_lower, "interval lower bound");
  auto* uo = run->add_option("--upper", run_upper, "interval upper bound");
  run->add_flag("--json", opt.as_json, "JSON report");

  // --- bench ---
  auto* bench = app.add_subcommand("bench", "benchmark table");
  std::string bench_task = "max";
  std::int64_t bench_n = 100;
  std::vector<int> bench_d;
  int bench_rank = 3, bench_repeats = 1;
  double bench_timeout = 300.0;
  bool bench_csv = false;
  bench->add_option("--task", bench_task, "max|sign")->required();
  bench->add_option("-n,--mode-size", bench_n, "mode size n");
  bench->add_option("-d,--order", bench_d, "orders d (repeatable)")
      ->required();
  bench->add_option("--rank", bench_rank, "input / cap rank");
  bench->add_option("--repeats", bench_repeats, "repeats per row (median)");
  bench->add_option("--timeout", bench_timeout, "per-row timeout in seconds");
  bench->add_flag("--csv", bench_csv, "CSV output");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_gen(gen_kind, gen_n, gen_d, gen_rank, gen_seed, gen_function,
                     gen_out, gen_text);
    if (bench->parsed())
      return cmd_bench(bench_task, bench_n, bench_d, bench_rank,
                       bench_repeats, bench_timeout, bench_csv);

    if (mr->count()) opt.max_rank = run_max_rank;
    if (tr->count()) opt.trigger_rank = run_trigger;
    if (vo->count()) opt.value = run_value;
    if (lo->count()) opt.lower = run_lower;
    if (uo->count()) opt.upper = run_upper;

    AnyTensor t = [&] {
      try {
        return tensor_file::read_file(opt.in_path);
      } catch (const std::exception& e) {
        std::cerr << "error: malformed tensor file: " << e.what() << "\n";
        std::exit(1);
      }
    }();

    std::optional<AnyTensor> element_out;
    const int code = std::visit(
        [&](const auto& w) { return run_task(w, opt, &element_out); }, t);
    if (element_out && !opt.out_path.empty())
      tensor_file::write_file(opt.out_path, *element_out, /*binary=*/true);
    return code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
