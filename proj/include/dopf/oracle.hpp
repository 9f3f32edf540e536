#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "dopf/decompose.hpp"
#include "dopf/linear_system.hpp"

namespace dopf {

struct FeasibilityReport {
  double max_equality_violation = 0;
  double max_bound_violation = 0;
  double objective = 0;
  std::string worst_row;  // tag of the worst equality offender
  std::string worst_var;  // key of the worst bound offender
  // every offender above the requested tolerance, worst first
  std::vector<std::pair<std::string, double>> equality_offenders;
  std::vector<std::pair<std::string, double>> bound_offenders;
};

/// Certifies A x = b and the box bounds; offenders beyond `tol` are listed
/// by row tag / variable key. Throws std::invalid_argument on dimension
/// mismatch.
FeasibilityReport check_feasibility(const LinearSystem& model,
                                    const Eigen::VectorXd& x, double tol);

enum class LpStatus { optimal, infeasible, unbounded };

struct LpSolution {
  Eigen::VectorXd x;
  double objective = 0;
  LpStatus status = LpStatus::infeasible;
  double kkt_residual = 0;  // meaningful when optimal
  int iterations = 0;       // simplex pivots over both phases
};

/// Desk-scale exact reference: two-phase dense simplex on bounded
/// variables with Bland's rule. Intended for test oracles and the
/// `validate --oracle` path; throws std::invalid_argument when the model
/// exceeds `max_cols` columns.
LpSolution reference_solve(const LinearSystem& model, int max_cols = 500);

/// Consensus extraction: per global column, the copy average of z clamped
/// to the bounds (falls back to x for columns without copies).
Eigen::VectorXd reconstruct_centralized(const Eigen::VectorXd& x,
                                        const Eigen::VectorXd& z,
                                        const DecomposedModel& model);

}  // namespace dopf
