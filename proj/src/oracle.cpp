#include "dopf/oracle.hpp"

#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <limits>

namespace dopf {

FeasibilityReport check_feasibility(const LinearSystem& model, const Eigen::VectorXd& x,
                                    double tol) {
  if (x.size() != model.cols())
    throw std::invalid_argument("check_feasibility: x has " + std::to_string(x.size()) +
                                " entries, model has " + std::to_string(model.cols()) +
                                " columns");
  FeasibilityReport report;
  const Eigen::VectorXd residual = model.A * x - model.b;
  for (int i = 0; i < model.rows(); ++i) {
    const double violation = std::abs(residual[i]);
    if (violation > report.max_equality_violation) {
      report.max_equality_violation = violation;
      report.worst_row = to_string(model.row_tags[i]);
    }
    if (violation > tol)
      report.equality_offenders.emplace_back(to_string(model.row_tags[i]), violation);
  }
  for (int j = 0; j < model.cols(); ++j) {
    const double violation =
        std::max(std::max(model.x_lo[j] - x[j], x[j] - model.x_hi[j]), 0.0);
    if (violation > report.max_bound_violation) {
      report.max_bound_violation = violation;
      report.worst_var = to_string(model.var_table[j]);
    }
    if (violation > tol)
      report.bound_offenders.emplace_back(to_string(model.var_table[j]), violation);
  }
  const auto by_violation = [](const auto& a, const auto& b) { return a.second > b.second; };
  std::stable_sort(report.equality_offenders.begin(), report.equality_offenders.end(),
                   by_violation);
  std::stable_sort(report.bound_offenders.begin(), report.bound_offenders.end(), by_violation);
  report.objective = model.c.dot(x);
  return report;
}

namespace {

// Dense two-phase simplex on bounded variables. Nonbasic variables rest at
// a finite bound (free ones at zero); Bland's smallest-index rule picks
// both the entering variable and the blocking bound, which rules out
// cycling on the degenerate bases these feeder LPs produce.

enum class VarStatus : char { basic, at_lower, at_upper, at_zero };

constexpr double kCostTol = 1e-9;    // reduced-cost eligibility
constexpr double kPivotTol = 1e-11;  // smallest usable pivot
constexpr double kRatioTie = 1e-12;

struct Tableau {
  Eigen::MatrixXd a;       // m x total (structural + artificial)
  Eigen::VectorXd b, lo, hi;
  Eigen::VectorXd x;
  std::vector<VarStatus> status;
  std::vector<int> basis;  // size m
  int m = 0, total = 0;
};

enum class PhaseOutcome { optimal, unbounded };

void refresh_basics(Tableau& t, const Eigen::PartialPivLU<Eigen::MatrixXd>& lu) {
  Eigen::VectorXd nonbasic = t.x;
  for (int i = 0; i < t.m; ++i) nonbasic[t.basis[i]] = 0.0;
  const Eigen::VectorXd xb = lu.solve(t.b - t.a * nonbasic);
  for (int i = 0; i < t.m; ++i) t.x[t.basis[i]] = xb[i];
}

PhaseOutcome run_phase(Tableau& t, const Eigen::VectorXd& cost, int& pivots, int pivot_limit) {
  while (true) {
    if (pivots > pivot_limit)
      throw std::runtime_error("reference_solve: pivot limit exceeded");

    Eigen::MatrixXd basis_matrix(t.m, t.m);
    for (int i = 0; i < t.m; ++i) basis_matrix.col(i) = t.a.col(t.basis[i]);
    Eigen::PartialPivLU<Eigen::MatrixXd> lu;
    Eigen::VectorXd y = Eigen::VectorXd::Zero(t.m);
    if (t.m > 0) {
      lu.compute(basis_matrix);
      refresh_basics(t, lu);
      Eigen::VectorXd cb(t.m);
      for (int i = 0; i < t.m; ++i) cb[i] = cost[t.basis[i]];
      y = Eigen::PartialPivLU<Eigen::MatrixXd>(basis_matrix.transpose()).solve(cb);
    }

    // Entering variable: smallest index whose reduced cost improves.
    int enter = -1;
    double direction = 0.0;
    for (int j = 0; j < t.total; ++j) {
      if (t.status[j] == VarStatus::basic) continue;
      if (t.lo[j] == t.hi[j]) continue;  // pinned, cannot move
      const double d = cost[j] - (t.m > 0 ? y.dot(t.a.col(j)) : 0.0);
      if (t.status[j] == VarStatus::at_lower && d < -kCostTol) {
        enter = j;
        direction = 1.0;
      } else if (t.status[j] == VarStatus::at_upper && d > kCostTol) {
        enter = j;
        direction = -1.0;
      } else if (t.status[j] == VarStatus::at_zero && std::abs(d) > kCostTol) {
        enter = j;
        direction = d > 0 ? -1.0 : 1.0;
      }
      if (enter >= 0) break;
    }
    if (enter < 0) return PhaseOutcome::optimal;

    Eigen::VectorXd w;
    if (t.m > 0) w = lu.solve(t.a.col(enter));

    // Ratio test: how far the entering variable can move before a basic
    // variable (or its own opposite bound) hits a bound.
    struct Blocker {
      double ratio;
      int var;        // variable index (Bland tie-break key)
      int row;        // basis position, -1 for the entering variable itself
      bool hits_upper;
    };
    std::vector<Blocker> blockers;
    if (t.status[enter] == VarStatus::at_lower && std::isfinite(t.hi[enter]))
      blockers.push_back({t.hi[enter] - t.lo[enter], enter, -1, true});
    if (t.status[enter] == VarStatus::at_upper && std::isfinite(t.lo[enter]))
      blockers.push_back({t.hi[enter] - t.lo[enter], enter, -1, false});
    for (int i = 0; i < t.m; ++i) {
      const double delta = direction * w[i];
      const int var = t.basis[i];
      if (delta > kPivotTol && std::isfinite(t.lo[var]))
        blockers.push_back({std::max((t.x[var] - t.lo[var]) / delta, 0.0), var, i, false});
      else if (delta < -kPivotTol && std::isfinite(t.hi[var]))
        blockers.push_back({std::max((t.x[var] - t.hi[var]) / delta, 0.0), var, i, true});
    }
    if (blockers.empty()) return PhaseOutcome::unbounded;

    double step = std::numeric_limits<double>::infinity();
    for (const Blocker& blk : blockers) step = std::min(step, blk.ratio);
    const Blocker* chosen = nullptr;
    for (const Blocker& blk : blockers)
      if (blk.ratio <= step + kRatioTie && (!chosen || blk.var < chosen->var)) chosen = &blk;

    ++pivots;
    if (chosen->row < 0) {
      // Bound flip: the entering variable crosses to its other bound.
      t.x[enter] = chosen->hits_upper ? t.hi[enter] : t.lo[enter];
      t.status[enter] = chosen->hits_upper ? VarStatus::at_upper : VarStatus::at_lower;
      continue;
    }
    const int leaving = t.basis[chosen->row];
    t.x[enter] += direction * step;
    t.status[enter] = VarStatus::basic;
    t.basis[chosen->row] = enter;
    t.x[leaving] = chosen->hits_upper ? t.hi[leaving] : t.lo[leaving];
    t.status[leaving] = chosen->hits_upper ? VarStatus::at_upper : VarStatus::at_lower;
  }
}

}  // namespace

LpSolution reference_solve(const LinearSystem& model, int max_cols) {
  const int n = model.cols();
  const int m = model.rows();
  if (n > max_cols)
    throw std::invalid_argument("reference_solve: " + std::to_string(n) +
                                " columns exceed the size guard of " + std::to_string(max_cols));
  for (int j = 0; j < n; ++j)
    if (model.x_lo[j] > model.x_hi[j])
      throw std::invalid_argument("reference_solve: crossed bounds on column " +
                                  std::to_string(j));

  Tableau t;
  t.m = m;
  t.total = n + m;
  t.a = Eigen::MatrixXd::Zero(m, t.total);
  t.a.leftCols(n) = Eigen::MatrixXd(model.A);
  t.b = model.b;
  t.lo.resize(t.total);
  t.hi.resize(t.total);
  t.x = Eigen::VectorXd::Zero(t.total);
  t.status.assign(t.total, VarStatus::at_zero);
  t.basis.resize(m);

  for (int j = 0; j < n; ++j) {
    t.lo[j] = model.x_lo[j];
    t.hi[j] = model.x_hi[j];
    if (std::isfinite(t.lo[j])) {
      t.x[j] = t.lo[j];
      t.status[j] = VarStatus::at_lower;
    } else if (std::isfinite(t.hi[j])) {
      t.x[j] = t.hi[j];
      t.status[j] = VarStatus::at_upper;
    }
  }
  // One artificial per row, signed so that it starts feasible (>= 0).
  const Eigen::VectorXd residual = model.b - t.a.leftCols(n) * t.x.head(n);
  for (int i = 0; i < m; ++i) {
    const int j = n + i;
    t.a(i, j) = residual[i] >= 0 ? 1.0 : -1.0;
    t.lo[j] = 0.0;
    t.hi[j] = kInf;
    t.x[j] = std::abs(residual[i]);
    t.status[j] = VarStatus::basic;
    t.basis[i] = j;
  }

  LpSolution solution;
  const int pivot_limit = 50000 + 200 * t.total;

  Eigen::VectorXd phase1_cost = Eigen::VectorXd::Zero(t.total);
  phase1_cost.tail(m).setOnes();
  int pivots = 0;
  run_phase(t, phase1_cost, pivots, pivot_limit);  // bounded below, cannot be unbounded

  double artificial_mass = 0.0;
  for (int i = 0; i < m; ++i) artificial_mass += std::abs(t.x[n + i]);
  if (artificial_mass > 1e-8) {
    solution.status = LpStatus::infeasible;
    solution.x = t.x.head(n);
    solution.iterations = pivots;
    return solution;
  }

  // Phase 2: original costs, artificials pinned at zero.
  for (int i = 0; i < m; ++i) t.hi[n + i] = 0.0;
  Eigen::VectorXd phase2_cost = Eigen::VectorXd::Zero(t.total);
  phase2_cost.head(n) = model.c;
  const PhaseOutcome outcome = run_phase(t, phase2_cost, pivots, pivot_limit);
  solution.iterations = pivots;
  solution.x = t.x.head(n);
  if (outcome == PhaseOutcome::unbounded) {
    solution.status = LpStatus::unbounded;
    return solution;
  }

  solution.status = LpStatus::optimal;
  solution.objective = model.c.dot(solution.x);

  // KKT certificate: stationarity/complementarity from the final basis
  // duals plus primal feasibility.
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  if (m > 0) {
    Eigen::MatrixXd basis_matrix(m, m);
    for (int i = 0; i < m; ++i) basis_matrix.col(i) = t.a.col(t.basis[i]);
    Eigen::VectorXd cb(m);
    for (int i = 0; i < m; ++i) cb[i] = phase2_cost[t.basis[i]];
    y = Eigen::PartialPivLU<Eigen::MatrixXd>(basis_matrix.transpose()).solve(cb);
  }
  double kkt = 0.0;
  for (int j = 0; j < n; ++j) {
    const double d = model.c[j] - (m > 0 ? y.dot(t.a.col(j)) : 0.0);
    const bool at_lo = std::isfinite(t.lo[j]) && t.x[j] - t.lo[j] <= 1e-9 * (1 + std::abs(t.lo[j]));
    const bool at_hi = std::isfinite(t.hi[j]) && t.hi[j] - t.x[j] <= 1e-9 * (1 + std::abs(t.hi[j]));
    if (at_lo && at_hi) continue;  // pinned variable, multiplier free
    if (at_lo)
      kkt = std::max(kkt, -d);
    else if (at_hi)
      kkt = std::max(kkt, d);
    else
      kkt = std::max(kkt, std::abs(d));
  }
  const Eigen::VectorXd primal = model.A * solution.x - model.b;
  for (int i = 0; i < m; ++i) kkt = std::max(kkt, std::abs(primal[i]));
  for (int j = 0; j < n; ++j) {
    kkt = std::max(kkt, model.x_lo[j] - solution.x[j]);
    kkt = std::max(kkt, solution.x[j] - model.x_hi[j]);
  }
  solution.kkt_residual = std::max(kkt, 0.0);
  return solution;
}

Eigen::VectorXd reconstruct_centralized(const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                                        const DecomposedModel& model) {
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(model.global_cols);
  std::vector<int> counts(model.global_cols, 0);
  for (int s = 0; s < model.subsystem_count(); ++s) {
    const Subsystem& sub = model.subsystems[s];
    for (int j = 0; j < sub.col_count(); ++j) {
      sums[sub.local_to_global[j]] += z[model.z_offsets[s] + j];
      ++counts[sub.local_to_global[j]];
    }
  }
  Eigen::VectorXd out(model.global_cols);
  for (int i = 0; i < model.global_cols; ++i) {
    const double value = counts[i] > 0 ? sums[i] / counts[i] : x[i];
    out[i] = std::min(std::max(value, model.x_lo[i]), model.x_hi[i]);
  }
  return out;
}

}  // namespace dopf
