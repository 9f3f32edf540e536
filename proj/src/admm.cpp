#include "dopf/admm.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>

namespace dopf {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

SingularSubsystemError::SingularSubsystemError(std::string subsystem_id)
    : std::runtime_error("numerically singular subsystem '" + subsystem_id + "'"),
      subsystem_id_(std::move(subsystem_id)) {}

Eigen::VectorXd gather_local(const Subsystem& sub, const Eigen::VectorXd& x_global) {
  Eigen::VectorXd v(sub.col_count());
  for (int j = 0; j < sub.col_count(); ++j) v[j] = x_global[sub.local_to_global[j]];
  return v;
}

Precomputed precompute(const DecomposedModel& model, WorkerPool* pool) {
  const int S = model.subsystem_count();
  Precomputed pre;
  pre.subs.resize(S);

  std::vector<char> singular(S, 0);
  const auto build_one = [&](int s) {
    const Subsystem& sub = model.subsystems[s];
    const int ns = sub.col_count();
    PrecomputedSub& ps = pre.subs[s];
    if (sub.row_count() == 0) {
      // No equality rows: the kernel is everything.
      ps.kernel_projector = Eigen::MatrixXd::Identity(ns, ns);
      ps.min_norm_solution = Eigen::VectorXd::Zero(ns);
      return;
    }
    const Eigen::MatrixXd gram = sub.A * sub.A.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
      singular[s] = 1;
      return;
    }
    const Eigen::VectorXd l_diag = llt.matrixL().toDenseMatrix().diagonal();
    const double d_min = l_diag.minCoeff();
    const double d_max = l_diag.maxCoeff();
    if (!(d_min > 0.0) || (d_min / d_max) * (d_min / d_max) < 1e-14) {
      singular[s] = 1;
      return;
    }
    // P = I - A'(AA')^{-1}A, v = A'(AA')^{-1}b
    const Eigen::MatrixXd solved_rows = llt.solve(sub.A);  // (AA')^{-1} A
    ps.kernel_projector =
        Eigen::MatrixXd::Identity(ns, ns) - sub.A.transpose() * solved_rows;
    ps.min_norm_solution = sub.A.transpose() * llt.solve(sub.b);
  };

  if (pool && pool->worker_count() > 1) {
    pool->run(S, build_one);
  } else {
    for (int s = 0; s < S; ++s) build_one(s);
  }
  for (int s = 0; s < S; ++s)
    if (singular[s]) throw SingularSubsystemError(model.subsystems[s].component_id);

  pre.inv_copy_counts.resize(model.global_cols);
  for (int i = 0; i < model.global_cols; ++i) {
    if (model.copy_counts[i] < 1)
      throw std::logic_error("global column " + std::to_string(i) + " has no copy");
    pre.inv_copy_counts[i] = 1.0 / static_cast<double>(model.copy_counts[i]);
  }
  pre.scatter.assign(model.global_cols, {});
  for (int s = 0; s < S; ++s) {
    const Subsystem& sub = model.subsystems[s];
    for (int j = 0; j < sub.col_count(); ++j)
      pre.scatter[sub.local_to_global[j]].emplace_back(s, j);
  }
  return pre;
}

namespace {

double initial_value(const DecomposedModel& model, int global_col) {
  if (model.var_table[global_col].kind == VarKind::w) return 1.0;
  const double lo = model.x_lo[global_col];
  const double hi = model.x_hi[global_col];
  if (std::isfinite(lo) && std::isfinite(hi)) return 0.5 * (lo + hi);
  return 0.0;
}

}  // namespace

IterationState initialize(const DecomposedModel& model) {
  IterationState state;
  state.x.resize(model.global_cols);
  for (int i = 0; i < model.global_cols; ++i) state.x[i] = initial_value(model, i);
  state.z.resize(model.total_local_vars());
  for (int s = 0; s < model.subsystem_count(); ++s) {
    const Subsystem& sub = model.subsystems[s];
    for (int j = 0; j < sub.col_count(); ++j)
      state.z[model.z_offsets[s] + j] = initial_value(model, sub.local_to_global[j]);
  }
  state.z_prev = state.z;
  state.lambda = Eigen::VectorXd::Zero(model.total_local_vars());
  state.t = 0;
  return state;
}

void global_update(IterationState& state, const Precomputed& pre, const DecomposedModel& model,
                   double rho) {
  for (int i = 0; i < model.global_cols; ++i) {
    double acc = 0.0;
    for (const auto& [s, j] : pre.scatter[i]) {
      const int idx = model.z_offsets[s] + j;
      acc += state.z[idx] - state.lambda[idx] / rho;
    }
    const double unclamped = (acc - model.c[i] / rho) * pre.inv_copy_counts[i];
    state.x[i] = std::min(std::max(unclamped, model.x_lo[i]), model.x_hi[i]);
  }
}

Eigen::VectorXd local_update(const Subsystem& sub, const PrecomputedSub& ps,
                             const Eigen::VectorXd& x_global,
                             const Eigen::VectorXd& lambda_s, double rho) {
  // Unconstrained minimizer of the local objective, then projected onto
  // the equality manifold.
  const Eigen::VectorXd target = gather_local(sub, x_global) + lambda_s / rho;
  return ps.kernel_projector * target + ps.min_norm_solution;
}

void dual_update(const Subsystem& sub, const Eigen::VectorXd& x_global,
                 const Eigen::VectorXd& x_s, Eigen::VectorXd& lambda_s, double rho) {
  lambda_s += rho * (gather_local(sub, x_global) - x_s);
}

Residuals residuals(const IterationState& state, const DecomposedModel& model, double rho,
                    double eps_rel) {
  double gap_sq = 0, step_sq = 0, bx_sq = 0, z_sq = 0, lambda_sq = 0;
  // Fixed subsystem-then-entry order; keeps traces bit-identical across
  // worker counts.
  for (int s = 0; s < model.subsystem_count(); ++s) {
    const Subsystem& sub = model.subsystems[s];
    const int off = model.z_offsets[s];
    for (int j = 0; j < sub.col_count(); ++j) {
      const double bx = state.x[sub.local_to_global[j]];
      const double zj = state.z[off + j];
      gap_sq += (bx - zj) * (bx - zj);
      const double dz = zj - state.z_prev[off + j];
      step_sq += dz * dz;
      bx_sq += bx * bx;
      z_sq += zj * zj;
      lambda_sq += state.lambda[off + j] * state.lambda[off + j];
    }
  }
  Residuals res;
  res.pres = std::sqrt(gap_sq);
  res.dres = rho * std::sqrt(step_sq);
  res.eps_prim = eps_rel * std::max(std::sqrt(bx_sq), std::sqrt(z_sq));
  res.eps_dual = eps_rel * std::sqrt(lambda_sq);
  return res;
}

SolveResult solve(const DecomposedModel& model, const Settings& settings) {
  if (!(settings.rho > 0)) throw std::invalid_argument("rho must be positive");
  if (!(settings.eps_rel > 0)) throw std::invalid_argument("eps_rel must be positive");
  if (settings.max_iter < 1) throw std::invalid_argument("max_iter must be positive");

  const int S = model.subsystem_count();
  const double rho = settings.rho;
  WorkerPool pool(std::max(1, settings.workers));

  SolveResult result;
  auto stamp = Clock::now();
  const Precomputed pre = precompute(model, &pool);
  result.timings.precompute = seconds_since(stamp);

  IterationState state = initialize(model);
  std::vector<double> local_violation(S, 0.0);
  result.status = SolveStatus::iteration_limit;

  for (int iter = 1; iter <= settings.max_iter; ++iter) {
    stamp = Clock::now();
    global_update(state, pre, model, rho);
    result.timings.global += seconds_since(stamp);

    state.z_prev = state.z;
    stamp = Clock::now();
    pool.run(S, [&](int s) {
      const Subsystem& sub = model.subsystems[s];
      const int off = model.z_offsets[s];
      const Eigen::VectorXd x_s =
          local_update(sub, pre.subs[s], state.x, state.lambda.segment(off, sub.col_count()), rho);
      state.z.segment(off, sub.col_count()) = x_s;
      local_violation[s] = sub.row_count() == 0
                               ? 0.0
                               : (sub.A * x_s - sub.b).cwiseAbs().maxCoeff();
    });
    result.timings.local += seconds_since(stamp);

    stamp = Clock::now();
    pool.run(S, [&](int s) {
      const Subsystem& sub = model.subsystems[s];
      const int off = model.z_offsets[s];
      Eigen::VectorXd lambda_s = state.lambda.segment(off, sub.col_count());
      dual_update(sub, state.x, state.z.segment(off, sub.col_count()), lambda_s, rho);
      state.lambda.segment(off, sub.col_count()) = lambda_s;
    });
    result.timings.dual += seconds_since(stamp);

    for (int s = 0; s < S; ++s)
      result.max_local_infeasibility = std::max(result.max_local_infeasibility, local_violation[s]);

    const Residuals res = residuals(state, model, rho, settings.eps_rel);
    double objective = 0.0;
    for (int i = 0; i < model.global_cols; ++i) objective += model.c[i] * state.x[i];

    state.t = iter;
    state.trace.push_back({iter, res.pres, res.dres, res.eps_prim, res.eps_dual, objective});
    if (settings.record_iterates)
      result.snapshots.push_back({state.x, state.z, state.z_prev, state.lambda});

    if (res.satisfied()) {
      result.status = SolveStatus::converged;
      break;
    }
  }

  result.x = state.x;
  result.z = state.z;
  result.lambda = state.lambda;
  result.iterations = state.t;
  result.objective = state.trace.empty() ? 0.0 : state.trace.back().objective;
  result.trace = std::move(state.trace);
  return result;
}

void write_trace_csv(const std::vector<TraceRow>& trace, std::ostream& out) {
  out.precision(17);
  out << "t,pres,dres,eps_prim,eps_dual,objective\n";
  for (const TraceRow& row : trace)
    out << row.t << "," << row.pres << "," << row.dres << "," << row.eps_prim << ","
        << row.eps_dual << "," << row.objective << "\n";
}

void write_solution(const std::vector<VariableKey>& var_table, const Eigen::VectorXd& x,
                    std::ostream& out) {
  out.precision(17);
  for (std::size_t i = 0; i < var_table.size(); ++i)
    out << to_string(var_table[i]) << " " << x[static_cast<int>(i)] << "\n";
}

}  // namespace dopf
