// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Criterion 8 is data-conditional and reports SKIP when no IEEE 13-bus
// document is available.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dopf/admm.hpp"
#include "dopf/decompose.hpp"
#include "dopf/feeder.hpp"
#include "dopf/lp_builder.hpp"
#include "dopf/oracle.hpp"

using namespace dopf;

namespace {

struct Failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct Skip : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool ok, const std::string& what) {
  if (!ok) throw Failure(what);
}

std::string fixture_path(const std::string& name) {
  return std::string(DOPF_FIXTURE_DIR) + "/" + name + ".json";
}

const std::vector<std::string>& fixture_names() {
  static const std::vector<std::string> names = {
      "single_bus", "two_bus", "three_bus_transformer", "four_bus_delta", "two_bus_delta"};
  return names;
}

struct FixtureRun {
  std::string name;
  Feeder feeder;
  LinearSystem ls;
  DecomposedModel model;
  SolveResult result;
  double oracle_objective = 0;
  double wall_seconds = 0;
};

// Shared pipeline runs reused by criteria 1, 2, and 7.
std::vector<FixtureRun>& runs() {
  static std::vector<FixtureRun> cached = [] {
    std::vector<FixtureRun> all;
    for (const std::string& name : fixture_names()) {
      FixtureRun run;
      run.name = name;
      const auto start = std::chrono::steady_clock::now();
      run.feeder = parse_feeder_file(fixture_path(name));
      if (has_errors(validate_feeder(run.feeder)))
        throw Failure("fixture " + name + " fails validation");
      run.ls = assemble_centralized(run.feeder);
      run.model = decompose(run.ls, run.feeder);
      Settings settings;
      settings.rho = 100.0;
      settings.eps_rel = 1e-4;
      run.result = solve(run.model, settings);
      run.wall_seconds =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      const LpSolution lp = reference_solve(run.ls);
      if (lp.status != LpStatus::optimal)
        throw Failure("oracle did not certify fixture " + name);
      run.oracle_objective = lp.objective;
      all.push_back(std::move(run));
    }
    return all;
  }();
  return cached;
}

void criterion_oracle_equivalence() {
  require(runs().size() >= 5, "need at least five bundled fixtures");

  // The fixture set must span the advertised shapes.
  std::set<std::size_t> bus_counts;
  std::set<int> phase_counts;
  bool has_wye = false, has_delta = false, has_off_nominal_tap = false;
  for (const FixtureRun& run : runs()) {
    bus_counts.insert(run.feeder.buses.size());
    for (const Bus& bus : run.feeder.buses) phase_counts.insert(bus.phases.size());
    for (const Load& load : run.feeder.loads) {
      has_wye |= load.connection == Connection::wye;
      has_delta |= load.connection == Connection::delta;
    }
    for (const LineSegment& line : run.feeder.lines)
      for (double tau : line.tau) has_off_nominal_tap |= tau != 1.0;
  }
  require(bus_counts.count(1) && bus_counts.count(2) && bus_counts.count(3) &&
              bus_counts.count(4),
          "fixtures must span 1-4 buses");
  require(phase_counts.count(1) && phase_counts.count(2) && phase_counts.count(3),
          "fixtures must span 1-3 phases");
  require(has_wye && has_delta, "fixtures must carry both wye and delta loads");
  require(has_off_nominal_tap, "fixtures must include an off-nominal-tap transformer");

  for (const FixtureRun& run : runs()) {
    require(run.result.status == SolveStatus::converged, run.name + " did not converge");
    const double gap = std::abs(run.result.objective - run.oracle_objective) /
                       std::max(1.0, std::abs(run.oracle_objective));
    require(gap <= 1e-3, run.name + ": objective gap " + std::to_string(gap));
    require(run.wall_seconds < 10.0, run.name + ": runtime " +
                                         std::to_string(run.wall_seconds) + " s");

    // Clamped copy-average reconstruction stays feasible at the scale of
    // the run's tolerance (||b|| can be zero when every demand row has
    // exponent 2, hence the unit floor).
    const Eigen::VectorXd rebuilt =
        reconstruct_centralized(run.result.x, run.result.z, run.model);
    const FeasibilityReport feas = check_feasibility(run.ls, rebuilt, 1e-9);
    const double scale = std::max(1.0, run.ls.b.norm());
    require(feas.max_equality_violation <= 10 * 1e-4 * scale,
            run.name + ": reconstruction violation " +
                std::to_string(feas.max_equality_violation));
    require(feas.max_bound_violation == 0.0, run.name + ": reconstruction left the box");
  }
}

void criterion_local_exactness() {
  for (const FixtureRun& run : runs())
    require(run.result.max_local_infeasibility <= 1e-8,
            run.name + ": max ||A_s x_s - b_s|| = " +
                std::to_string(run.result.max_local_infeasibility));
}

void criterion_projector_algebra() {
  const auto check_operators = [](const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                  const PrecomputedSub& ps, const std::string& what) {
    const Eigen::MatrixXd abar = -ps.kernel_projector;  // A'(AA')^{-1}A - I
    require((abar * abar + abar).cwiseAbs().maxCoeff() <= 1e-9, what + ": Abar^2 + Abar");
    if (a.rows() > 0) {
      require((a * abar).cwiseAbs().maxCoeff() <= 1e-9, what + ": A Abar");
      require((a * ps.min_norm_solution - b).cwiseAbs().maxCoeff() <= 1e-9,
              what + ": A bbar - b");
    }
  };

  for (const FixtureRun& run : runs()) {
    const Precomputed pre = precompute(run.model);
    for (int s = 0; s < run.model.subsystem_count(); ++s)
      check_operators(run.model.subsystems[s].A, run.model.subsystems[s].b, pre.subs[s],
                      run.name + "/" + run.model.subsystems[s].component_id);
  }

  std::mt19937 rng(20250810);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 10);
    const int n = m + static_cast<int>(rng() % 11);
    Eigen::MatrixXd a(m, n);
    Eigen::VectorXd b(m);
    do {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = normal(rng);
    } while (Eigen::FullPivLU<Eigen::MatrixXd>(a).rank() < m);
    for (int i = 0; i < m; ++i) b[i] = normal(rng);

    DecomposedModel model;
    model.global_cols = n;
    model.c = Eigen::VectorXd::Zero(n);
    model.x_lo = Eigen::VectorXd::Constant(n, -kInf);
    model.x_hi = Eigen::VectorXd::Constant(n, kInf);
    for (int j = 0; j < n; ++j)
      model.var_table.push_back({VarKind::p_load, "v" + std::to_string(j), 1,
                                 FlowDirection::from_to});
    Subsystem sub;
    sub.component_id = "rand";
    sub.A = a;
    sub.b = b;
    for (int j = 0; j < n; ++j) sub.local_to_global.push_back(j);
    model.subsystems.push_back(std::move(sub));
    model.copy_counts.assign(n, 1);
    model.z_offsets = {0, n};

    const Precomputed pre = precompute(model);
    check_operators(a, b, pre.subs[0], "random trial " + std::to_string(trial));
  }
}

void criterion_closed_form_vs_kkt() {
  std::mt19937 rng(424242);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> rho_dist(1.0, 200.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 10);   // m <= 10
    const int n = m + static_cast<int>(rng() % (21 - m));  // n <= 20
    Eigen::MatrixXd a(m, n);
    Eigen::VectorXd b(m);
    do {
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) a(i, j) = normal(rng);
    } while (Eigen::FullPivLU<Eigen::MatrixXd>(a).rank() < m);
    for (int i = 0; i < m; ++i) b[i] = normal(rng);
    const double rho = rho_dist(rng);

    DecomposedModel model;
    model.global_cols = n;
    model.c = Eigen::VectorXd::Zero(n);
    model.x_lo = Eigen::VectorXd::Constant(n, -kInf);
    model.x_hi = Eigen::VectorXd::Constant(n, kInf);
    for (int j = 0; j < n; ++j)
      model.var_table.push_back({VarKind::p_load, "v" + std::to_string(j), 1,
                                 FlowDirection::from_to});
    Subsystem sub;
    sub.component_id = "rand";
    sub.A = a;
    sub.b = b;
    for (int j = 0; j < n; ++j) sub.local_to_global.push_back(j);
    model.subsystems.push_back(std::move(sub));
    model.copy_counts.assign(n, 1);
    model.z_offsets = {0, n};
    const Precomputed pre = precompute(model);

    Eigen::VectorXd x_global(n), lambda(n);
    for (int j = 0; j < n; ++j) {
      x_global[j] = 2.0 * normal(rng);
      lambda[j] = 5.0 * normal(rng);
    }
    const Eigen::VectorXd mine =
        local_update(model.subsystems[0], pre.subs[0], x_global, lambda, rho);

    // Dense KKT elimination of the same equality-constrained QP.
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + m, n + m);
    kkt.topLeftCorner(n, n) = rho * Eigen::MatrixXd::Identity(n, n);
    kkt.topRightCorner(n, m) = a.transpose();
    kkt.bottomLeftCorner(m, n) = a;
    Eigen::VectorXd rhs(n + m);
    rhs.head(n) = rho * x_global + lambda;  // -d
    rhs.tail(m) = b;
    const Eigen::VectorXd expected = kkt.fullPivLu().solve(rhs).head(n);

    const double err = (mine - expected).cwiseAbs().maxCoeff();
    require(err <= 1e-8, "trial " + std::to_string(trial) + ": |closed form - KKT| = " +
                             std::to_string(err));
  }
}

void criterion_termination_fidelity() {
  const Feeder f = parse_feeder_file(fixture_path("two_bus"));
  const LinearSystem ls = assemble_centralized(f);
  const DecomposedModel model = decompose(ls, f);
  Settings settings;
  settings.eps_rel = 1e-4;
  settings.record_iterates = true;
  const SolveResult result = solve(model, settings);
  require(result.status == SolveStatus::converged, "fixture run did not converge");
  require(result.snapshots.size() == result.trace.size(), "snapshot/trace length mismatch");

  const int S = model.subsystem_count();
  const int n = model.global_cols;
  // Materialized consensus matrices: an independent route to B_s x and
  // B_s' v than the engine's index loops.
  std::vector<Eigen::MatrixXd> consensus(S);
  for (int s = 0; s < S; ++s) {
    const Subsystem& sub = model.subsystems[s];
    consensus[s] = Eigen::MatrixXd::Zero(sub.col_count(), n);
    for (int j = 0; j < sub.col_count(); ++j) consensus[s](j, sub.local_to_global[j]) = 1.0;
  }

  for (std::size_t it = 0; it < result.trace.size(); ++it) {
    const IterateSnapshot& snap = result.snapshots[it];
    double gap_sq = 0, step_sq = 0, bx_sq = 0, z_sq = 0, lam_sq = 0;
    for (int s = 0; s < S; ++s) {
      const Subsystem& sub = model.subsystems[s];
      const int off = model.z_offsets[s];
      const int ns = sub.col_count();
      const Eigen::VectorXd bx = consensus[s] * snap.x;
      const Eigen::VectorXd xs = snap.z.segment(off, ns);
      gap_sq += (bx - xs).squaredNorm();
      step_sq += (consensus[s].transpose() * (xs - snap.z_prev.segment(off, ns))).squaredNorm();
      bx_sq += bx.squaredNorm();
      z_sq += xs.squaredNorm();
      lam_sq +=
          (consensus[s].transpose() * snap.lambda.segment(off, ns)).squaredNorm();
    }
    const double pres = std::sqrt(gap_sq);
    const double dres = 100.0 * std::sqrt(step_sq);
    const double eps_prim = settings.eps_rel * std::max(std::sqrt(bx_sq), std::sqrt(z_sq));
    const double eps_dual = settings.eps_rel * std::sqrt(lam_sq);

    const TraceRow& row = result.trace[it];
    require(std::abs(row.pres - pres) <= 1e-12, "pres mismatch at t=" + std::to_string(row.t));
    require(std::abs(row.dres - dres) <= 1e-12, "dres mismatch at t=" + std::to_string(row.t));
    require(std::abs(row.eps_prim - eps_prim) <= 1e-12,
            "eps_prim mismatch at t=" + std::to_string(row.t));
    require(std::abs(row.eps_dual - eps_dual) <= 1e-12,
            "eps_dual mismatch at t=" + std::to_string(row.t));
  }
}

void criterion_determinism() {
  const Feeder f = parse_feeder_file(fixture_path("four_bus_delta"));
  const DecomposedModel model = decompose(assemble_centralized(f), f);
  std::set<int> worker_counts = {1, 4,
                                 static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))};
  std::vector<std::vector<TraceRow>> traces;
  for (int workers : worker_counts) {
    Settings settings;
    settings.eps_rel = 1e-4;
    settings.workers = workers;
    traces.push_back(solve(model, settings).trace);
  }
  for (std::size_t k = 1; k < traces.size(); ++k) {
    require(traces[k].size() == traces[0].size(), "iteration counts differ across workers");
    for (std::size_t i = 0; i < traces[0].size(); ++i) {
      const TraceRow& a = traces[0][i];
      const TraceRow& b = traces[k][i];
      require(a.pres == b.pres && a.dres == b.dres && a.eps_prim == b.eps_prim &&
                  a.eps_dual == b.eps_dual && a.objective == b.objective,
              "trace diverges at t=" + std::to_string(a.t));
    }
  }
}

void criterion_decomposition_soundness() {
  for (const FixtureRun& run : runs()) {
    int pre_rows = 0;
    for (const Subsystem& sub : run.model.subsystems) pre_rows += sub.rows_before_reduction;
    require(pre_rows == run.ls.rows(),
            run.name + ": pre-reduction row sum " + std::to_string(pre_rows) + " vs " +
                std::to_string(run.ls.rows()));

    const LpSolution lp = reference_solve(run.ls);
    for (const Subsystem& sub : run.model.subsystems) {
      if (sub.row_count() == 0) continue;
      const Eigen::VectorXd local = gather_local(sub, lp.x);
      const double violation = (sub.A * local - sub.b).cwiseAbs().maxCoeff();
      require(violation <= 1e-9,
              run.name + "/" + sub.component_id + ": transport violation " +
                  std::to_string(violation));
    }
  }
}

void criterion_structural_anchors() {
  std::string path;
  if (const char* env = std::getenv("DOPF_IEEE13")) path = env;
  if (path.empty()) {
    const std::string bundled = fixture_path("ieee13");
    if (std::filesystem::exists(bundled)) path = bundled;
  }
  if (path.empty())
    throw Skip("no IEEE 13-bus feeder document supplied (set DOPF_IEEE13 to enable)");

  const Feeder f = parse_feeder_file(path);
  require(!has_errors(validate_feeder(f)), "IEEE 13 document fails validation");
  const LinearSystem ls = assemble_centralized(f);
  const auto comps = build_component_graph(f);
  int leaves = 0;
  for (const auto& comp : comps)
    if (comp.kind == ComponentKind::merged_leaf) ++leaves;
  require(static_cast<int>(f.buses.size()) == 29, "node count");
  require(static_cast<int>(f.lines.size()) == 28, "line count");
  require(leaves == 7, "leaf count");
  require(static_cast<int>(comps.size()) == 50, "component count");
  require(ls.cols() == 454, "column count");
}

void criterion_monotone_tolerance() {
  const Feeder f = parse_feeder_file(fixture_path("three_bus_transformer"));
  const DecomposedModel model = decompose(assemble_centralized(f), f);
  int previous_iterations = 0;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    Settings settings;
    settings.eps_rel = eps;
    const SolveResult result = solve(model, settings);
    require(result.status == SolveStatus::converged,
            "eps_rel " + std::to_string(eps) + " did not converge");
    require(result.iterations >= previous_iterations,
            "iteration count decreased as the tolerance tightened");
    previous_iterations = result.iterations;
    const TraceRow& last = result.trace.back();
    require(last.pres <= last.eps_prim && last.dres <= last.eps_dual,
            "termination condition not literally satisfied at eps_rel " + std::to_string(eps));
  }
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void()>>> criteria = {
      {"criterion 1: oracle equivalence on bundled fixtures", criterion_oracle_equivalence},
      {"criterion 2: local exactness across all iterations", criterion_local_exactness},
      {"criterion 3: projector algebra identities", criterion_projector_algebra},
      {"criterion 4: closed-form local update vs KKT oracle", criterion_closed_form_vs_kkt},
      {"criterion 5: termination-formula fidelity", criterion_termination_fidelity},
      {"criterion 6: bitwise determinism across worker counts", criterion_determinism},
      {"criterion 7: decomposition soundness", criterion_decomposition_soundness},
      {"criterion 8: structural anchors (IEEE 13, conditional)", criterion_structural_anchors},
      {"criterion 9: monotone tolerance behavior", criterion_monotone_tolerance},
  };

  int failures = 0;
  for (const auto& [name, body] : criteria) {
    try {
      body();
      std::cout << "[PASS] " << name << "\n";
    } catch (const Skip& skip) {
      std::cout << "[SKIP] " << name << " -- " << skip.what() << "\n";
    } catch (const std::exception& e) {
      std::cout << "[FAIL] " << name << " -- " << e.what() << "\n";
      ++failures;
    }
  }
  if (failures > 0) {
    std::cout << failures << " criterion(s) failed\n";
    return 1;
  }
  std::cout << "all criteria passed (skips noted above)\n";
  return 0;
}
