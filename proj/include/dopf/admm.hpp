#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "dopf/decompose.hpp"
#include "dopf/parallel.hpp"

namespace dopf {

struct Settings {
  double rho = 100.0;     // consensus penalty
  double eps_rel = 1e-3;  // relative termination tolerance
  int max_iter = 50000;
  int workers = 1;
  bool record_iterates = false;  // keep per-iteration snapshots (tests)
};

/// Per-subsystem operators fixed before the iteration starts. The local
/// step is an equality-constrained least-distance problem whose minimizer
/// is the projection of the unconstrained target onto ker(A_s), shifted by
/// the minimum-norm solution of A_s x = b_s:
///   kernel_projector   P = I - A'(AA')^{-1}A      (P^2 = P, A P = 0)
///   min_norm_solution  v = A'(AA')^{-1} b         (A v = b)
struct PrecomputedSub {
  Eigen::MatrixXd kernel_projector;
  Eigen::VectorXd min_norm_solution;
};

struct Precomputed {
  std::vector<PrecomputedSub> subs;
  Eigen::VectorXd inv_copy_counts;  // per global column, 1 / (number of copies)
  // global column -> (subsystem, local index) of every copy
  std::vector<std::vector<std::pair<int, int>>> scatter;
};

class SingularSubsystemError : public std::runtime_error {
 public:
  explicit SingularSubsystemError(std::string subsystem_id);
  const std::string& subsystem_id() const { return subsystem_id_; }

 private:
  std::string subsystem_id_;
};

/// Factors every A_s A_s' (SPD once rows are independent) and builds the
/// consensus scatter structure. Requires full row rank; throws
/// SingularSubsystemError otherwise.
Precomputed precompute(const DecomposedModel& model, WorkerPool* pool = nullptr);

struct TraceRow {
  int t = 0;
  double pres = 0, dres = 0, eps_prim = 0, eps_dual = 0;
  double objective = 0;
};

struct Residuals {
  double pres = 0, dres = 0, eps_prim = 0, eps_dual = 0;

  bool satisfied() const { return pres <= eps_prim && dres <= eps_dual; }
};

struct IterationState {
  Eigen::VectorXd x;                 // global (n)
  Eigen::VectorXd z, z_prev, lambda; // stacked locals / duals
  int t = 0;                         // completed iterations == trace length
  std::vector<TraceRow> trace;
};

/// Copies of a subsystem's slice of the global vector (B_s x).
Eigen::VectorXd gather_local(const Subsystem& sub, const Eigen::VectorXd& x_global);

/// lambda = 0; locals (and the global) start at 1 for squared-voltage
/// columns, the bound midpoint where both bounds are finite, 0 otherwise.
IterationState initialize(const DecomposedModel& model);

/// Copy-averaged, cost-shifted, box-clamped global step:
///   x_hat_i = (sum of (z - lambda/rho) over copies - c_i/rho) / copies_i
///   x_i     = clamp(x_hat_i, x_lo_i, x_hi_i)
void global_update(IterationState& state, const Precomputed& pre,
                   const DecomposedModel& model, double rho);

/// Closed-form local step: project the consensus target B_s x + lambda_s/rho
/// onto ker(A_s) and shift by the minimum-norm solution. Satisfies
/// A_s x_s = b_s to factorization precision.
Eigen::VectorXd local_update(const Subsystem& sub, const PrecomputedSub& ps,
                             const Eigen::VectorXd& x_global,
                             const Eigen::VectorXd& lambda_s, double rho);

/// lambda_s += rho (B_s x - x_s).
void dual_update(const Subsystem& sub, const Eigen::VectorXd& x_global,
                 const Eigen::VectorXd& x_s, Eigen::VectorXd& lambda_s, double rho);

/// Primal/dual residuals and their relative tolerances; summation runs in
/// subsystem order so traces are reproducible bit for bit.
Residuals residuals(const IterationState& state, const DecomposedModel& model,
                    double rho, double eps_rel);

enum class SolveStatus { converged, iteration_limit };

struct PhaseTimings {
  double precompute = 0, global = 0, local = 0, dual = 0;  // seconds
};

struct IterateSnapshot {
  Eigen::VectorXd x, z, z_prev, lambda;
};

struct SolveResult {
  Eigen::VectorXd x, z, lambda;
  SolveStatus status = SolveStatus::iteration_limit;
  int iterations = 0;
  double objective = 0;
  /// max over all iterations and subsystems of ||A_s x_s - b_s||_inf
  double max_local_infeasibility = 0;
  std::vector<TraceRow> trace;
  PhaseTimings timings;
  std::vector<IterateSnapshot> snapshots;  // iff Settings::record_iterates
};

/// Runs the full loop: global step, parallel local steps, dual steps,
/// residual test; stops when both residuals pass or max_iter is reached.
SolveResult solve(const DecomposedModel& model, const Settings& settings);

/// CSV trace: t,pres,dres,eps_prim,eps_dual,objective.
void write_trace_csv(const std::vector<TraceRow>& trace, std::ostream& out);

/// Final solution keyed by variable, one "key value" line each.
void write_solution(const std::vector<VariableKey>& var_table,
                    const Eigen::VectorXd& x, std::ostream& out);

}  // namespace dopf
