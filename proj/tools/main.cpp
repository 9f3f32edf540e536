// Command-line front end: solve, validate, and inspect feeder documents.
#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <fstream>
#include <iostream>
#include <thread>

#include "dopf/admm.hpp"
#include "dopf/decompose.hpp"
#include "dopf/feeder.hpp"
#include "dopf/lp_builder.hpp"
#include "dopf/oracle.hpp"

namespace {

// Exit codes, also documented in the README.
constexpr int kExitOk = 0;
constexpr int kExitInternal = 1;
constexpr int kExitParse = 2;
constexpr int kExitValidation = 3;
constexpr int kExitInfeasibleSubsystem = 4;
constexpr int kExitIterationLimit = 5;

using nlohmann::json;

struct CommonOptions {
  std::string input;
  double rho = 100.0;
  double eps_rel = 1e-3;
  int max_iter = 50000;
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string trace_path;
  std::string report_path;
  std::string solution_path;
  unsigned seed = 0;
};

void add_input_flag(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--input", opts.input, "feeder document (JSON)")->required();
}

void write_report(const json& report, const std::string& path) {
  if (path.empty()) {
    std::cout << report.dump(2) << "\n";
    return;
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report to '" + path + "'");
  out << report.dump(2) << "\n";
}

void print_diagnostics(const std::vector<dopf::Diagnostic>& diags) {
  for (const dopf::Diagnostic& d : diags) {
    std::cerr << (d.severity == dopf::Severity::error ? "error" : "warning");
    if (!d.component.empty()) std::cerr << " [" << d.component << "]";
    std::cerr << ": " << d.message << "\n";
  }
}

// Parse + validate; returns the feeder or exits via the returned code.
int load_feeder(const CommonOptions& opts, dopf::Feeder& out) {
  try {
    out = dopf::parse_feeder_file(opts.input);
  } catch (const dopf::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitParse;
  }
  const auto diags = dopf::validate_feeder(out);
  print_diagnostics(diags);
  if (dopf::has_errors(diags)) return kExitValidation;
  return kExitOk;
}

json settings_json(const CommonOptions& opts) {
  return {{"rho", opts.rho},
          {"eps_rel", opts.eps_rel},
          {"max_iter", opts.max_iter},
          {"workers", opts.workers},
          {"seed", opts.seed}};
}

int cmd_solve(const CommonOptions& opts) {
  dopf::Feeder feeder;
  if (int code = load_feeder(opts, feeder); code != kExitOk) return code;

  const dopf::LinearSystem ls = dopf::assemble_centralized(feeder);
  dopf::DecomposedModel model;
  try {
    model = dopf::decompose(ls, feeder, 1e-9, opts.workers);
  } catch (const dopf::InfeasibleSubsystemError& e) {
    std::cerr << e.what() << "\n";
    return kExitInfeasibleSubsystem;
  }

  dopf::Settings settings;
  settings.rho = opts.rho;
  settings.eps_rel = opts.eps_rel;
  settings.max_iter = opts.max_iter;
  settings.workers = opts.workers;

  dopf::SolveResult result;
  try {
    result = dopf::solve(model, settings);
  } catch (const dopf::SingularSubsystemError& e) {
    std::cerr << e.what() << "\n";
    return kExitInfeasibleSubsystem;
  }

  if (!opts.trace_path.empty()) {
    std::ofstream trace(opts.trace_path);
    if (!trace) {
      std::cerr << "cannot write trace to '" << opts.trace_path << "'\n";
      return kExitInternal;
    }
    dopf::write_trace_csv(result.trace, trace);
  }
  if (!opts.solution_path.empty()) {
    std::ofstream solution(opts.solution_path);
    if (!solution) {
      std::cerr << "cannot write solution to '" << opts.solution_path << "'\n";
      return kExitInternal;
    }
    dopf::write_solution(ls.var_table, result.x, solution);
  }

  json report;
  report["status"] =
      result.status == dopf::SolveStatus::converged ? "converged" : "iteration_limit";
  report["iterations"] = result.iterations;
  report["objective"] = result.objective;
  if (!result.trace.empty()) {
    const dopf::TraceRow& last = result.trace.back();
    report["residuals"] = {{"pres", last.pres},
                           {"dres", last.dres},
                           {"eps_prim", last.eps_prim},
                           {"eps_dual", last.eps_dual}};
  }
  report["timings_sec"] = {{"precompute", result.timings.precompute},
                           {"global", result.timings.global},
                           {"local", result.timings.local},
                           {"dual", result.timings.dual}};
  report["model"] = {{"rows", ls.rows()},
                     {"cols", ls.cols()},
                     {"subsystems", model.subsystem_count()}};
  report["settings"] = settings_json(opts);
  report["max_local_infeasibility"] = result.max_local_infeasibility;
  json solution = json::object();
  for (int i = 0; i < ls.cols(); ++i)
    solution[dopf::to_string(ls.var_table[i])] = result.x[i];
  report["solution"] = std::move(solution);
  write_report(report, opts.report_path);

  return result.status == dopf::SolveStatus::converged ? kExitOk : kExitIterationLimit;
}

int cmd_validate(const CommonOptions& opts, bool with_oracle) {
  dopf::Feeder feeder;
  if (int code = load_feeder(opts, feeder); code != kExitOk) return code;

  json report;
  report["valid"] = true;
  if (with_oracle) {
    const dopf::LinearSystem ls = dopf::assemble_centralized(feeder);
    dopf::LpSolution lp;
    try {
      lp = dopf::reference_solve(ls);
    } catch (const std::invalid_argument& e) {
      std::cerr << e.what() << "\n";
      return kExitValidation;
    }
    const char* status = lp.status == dopf::LpStatus::optimal     ? "optimal"
                         : lp.status == dopf::LpStatus::infeasible ? "infeasible"
                                                                    : "unbounded";
    report["oracle"] = {{"status", status}};
    if (lp.status == dopf::LpStatus::optimal) {
      const dopf::FeasibilityReport feas = dopf::check_feasibility(ls, lp.x, 1e-9);
      report["oracle"]["objective"] = lp.objective;
      report["oracle"]["kkt_residual"] = lp.kkt_residual;
      report["oracle"]["max_equality_violation"] = feas.max_equality_violation;
      report["oracle"]["max_bound_violation"] = feas.max_bound_violation;
    } else {
      write_report(report, opts.report_path);
      return kExitValidation;
    }
  }
  write_report(report, opts.report_path);
  return kExitOk;
}

json dimension_stats(const std::vector<int>& values) {
  json stats;
  if (values.empty()) return stats;
  int lo = values.front(), hi = values.front(), sum = 0;
  for (int v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    sum += v;
  }
  const double mean = static_cast<double>(sum) / values.size();
  double var = 0;
  for (int v : values) var += (v - mean) * (v - mean);
  stats["min"] = lo;
  stats["max"] = hi;
  stats["mean"] = mean;
  stats["stdev"] = std::sqrt(var / values.size());
  stats["sum"] = sum;
  return stats;
}

int cmd_inspect(const CommonOptions& opts, const std::string& dump_lp,
                const std::string& dump_subs) {
  dopf::Feeder feeder;
  if (int code = load_feeder(opts, feeder); code != kExitOk) return code;

  const dopf::LinearSystem ls = dopf::assemble_centralized(feeder);
  const auto comps = dopf::build_component_graph(feeder);
  dopf::DecomposedModel model = dopf::partition(ls, comps);
  const int pre_reduction_rows = [&] {
    int sum = 0;
    for (const auto& sub : model.subsystems) sum += sub.rows_before_reduction;
    return sum;
  }();
  try {
    dopf::reduce_subsystems(model, 1e-9, opts.workers);
  } catch (const dopf::InfeasibleSubsystemError& e) {
    std::cerr << e.what() << "\n";
    return kExitInfeasibleSubsystem;
  }

  int leaves = 0;
  for (const auto& comp : comps)
    if (comp.kind == dopf::ComponentKind::merged_leaf) ++leaves;

  std::vector<int> m_s, n_s;
  for (const auto& sub : model.subsystems) {
    m_s.push_back(sub.row_count());
    n_s.push_back(sub.col_count());
  }

  json report;
  report["centralized"] = {{"rows", ls.rows()}, {"cols", ls.cols()}};
  report["graph"] = {{"nodes", static_cast<int>(feeder.buses.size())},
                     {"lines", static_cast<int>(feeder.lines.size())},
                     {"leaves", leaves},
                     {"components", static_cast<int>(comps.size())}};
  report["subsystems"] = {{"count", model.subsystem_count()},
                          {"rows_pre_reduction", pre_reduction_rows},
                          {"m_s", dimension_stats(m_s)},
                          {"n_s", dimension_stats(n_s)}};
  write_report(report, opts.report_path);

  if (!dump_lp.empty()) {
    std::ofstream out(dump_lp);
    if (!out) {
      std::cerr << "cannot write LP dump to '" << dump_lp << "'\n";
      return kExitInternal;
    }
    dopf::dump_linear_system(ls, out);
  }
  if (!dump_subs.empty()) {
    std::ofstream out(dump_subs);
    if (!out) {
      std::cerr << "cannot write subsystem dump to '" << dump_subs << "'\n";
      return kExitInternal;
    }
    dopf::dump_subsystems(model, out);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Linearized multi-phase distribution OPF via consensus ADMM"};
  app.require_subcommand(1);

  CommonOptions opts;
  bool with_oracle = false;
  std::string dump_lp, dump_subs;

  CLI::App* solve = app.add_subcommand("solve", "run the ADMM solver on a feeder document");
  add_input_flag(solve, opts);
  solve->add_option("--rho", opts.rho, "consensus penalty (default 100)");
  solve->add_option("--eps-rel", opts.eps_rel, "relative tolerance (default 1e-3)");
  solve->add_option("--max-iter", opts.max_iter, "iteration cap (default 50000)");
  solve->add_option("--workers", opts.workers, "worker threads (default: hardware)");
  solve->add_option("--trace", opts.trace_path, "write per-iteration residual CSV here");
  solve->add_option("--solution", opts.solution_path,
                    "write the solution as 'key value' lines here");
  solve->add_option("--report", opts.report_path, "write the JSON report here (default stdout)");
  solve->add_option("--seed", opts.seed, "seed recorded in the report");

  CLI::App* validate = app.add_subcommand("validate", "check a feeder document");
  add_input_flag(validate, opts);
  validate->add_flag("--oracle", with_oracle, "also solve the LP with the exact reference");
  validate->add_option("--report", opts.report_path, "write the JSON report here");
  validate->add_option("--workers", opts.workers, "worker threads");

  CLI::App* inspect = app.add_subcommand("inspect", "report model and decomposition sizes");
  add_input_flag(inspect, opts);
  inspect->add_option("--report", opts.report_path, "write the JSON report here");
  inspect->add_option("--dump-lp", dump_lp, "write the centralized LP as sparse triplets");
  inspect->add_option("--dump-subsystems", dump_subs, "write per-subsystem details");
  inspect->add_option("--workers", opts.workers, "worker threads");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return cmd_solve(opts);
    if (validate->parsed()) return cmd_validate(opts, with_oracle);
    if (inspect->parsed()) return cmd_inspect(opts, dump_lp, dump_subs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
