#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dopf/feeder.hpp"
#include "dopf/linear_system.hpp"

namespace dopf {

enum class ComponentKind { bus_node, line_edge, merged_leaf };

struct MemberRef {
  OwnerKind kind = OwnerKind::bus;
  std::string id;

  bool operator==(const MemberRef&) const = default;
};

/// One node of the decomposition graph. merged_leaf combines a leaf bus
/// with its single incident line; a line absorbs at most one leaf.
struct Component {
  std::string id;
  ComponentKind kind = ComponentKind::bus_node;
  std::vector<MemberRef> members;
};

/// Components partition the feeder's buses and lines. Buses are visited in
/// id order; a degree-1 bus merges with its line unless the line is already
/// claimed by another leaf.
std::vector<Component> build_component_graph(const Feeder& f);

/// One consensus subsystem: the dense restriction of its rows to the
/// global columns they reference. local_to_global is the row encoding of
/// the 0-1 consensus map (strictly ascending, hence duplicate-free).
struct Subsystem {
  std::string component_id;
  Eigen::MatrixXd A;  // m_s x n_s
  Eigen::VectorXd b;
  std::vector<int> local_to_global;
  int rows_before_reduction = 0;

  int row_count() const { return static_cast<int>(A.rows()); }
  int col_count() const { return static_cast<int>(A.cols()); }
};

struct DecomposedModel {
  std::vector<Subsystem> subsystems;
  int global_cols = 0;
  Eigen::VectorXd c, x_lo, x_hi;        // shared with the centralized LP
  std::vector<VariableKey> var_table;
  std::vector<int> copy_counts;         // per global column, >= 1
  std::vector<int> z_offsets;           // size S+1; prefix sums of n_s

  int subsystem_count() const { return static_cast<int>(subsystems.size()); }
  int total_local_vars() const { return z_offsets.empty() ? 0 : z_offsets.back(); }
};

class InfeasibleSubsystemError : public std::runtime_error {
 public:
  explicit InfeasibleSubsystemError(std::string subsystem_id);
  const std::string& subsystem_id() const { return subsystem_id_; }

 private:
  std::string subsystem_id_;
};

/// Gaussian elimination of [A|b] to echelon form with unit pivots; each
/// pivot is the largest |entry| of the remaining submatrix, and values
/// <= tol count as zero. Redundant rows are dropped; a zero row with
/// nonzero rhs throws InfeasibleSubsystemError. The result has full row
/// rank and the same row space as the input.
std::pair<Eigen::MatrixXd, Eigen::VectorXd> row_reduce(const Eigen::MatrixXd& a,
                                                       const Eigen::VectorXd& b,
                                                       double tol);

/// Assigns every row to the component owning its tag; subsystem columns are
/// the union of columns referenced by those rows, plus any otherwise
/// uncovered column owned by the component (keeps every copy count >= 1).
DecomposedModel partition(const LinearSystem& model, const std::vector<Component>& comps);

/// Row-reduces every subsystem in place. Errors name the subsystem.
void reduce_subsystems(DecomposedModel& model, double tol = 1e-9, int workers = 1);

/// build_component_graph + partition + reduce_subsystems.
DecomposedModel decompose(const LinearSystem& model, const Feeder& f,
                          double tol = 1e-9, int workers = 1);

/// Per-subsystem dimensions, rank drop, and consensus map, as text.
void dump_subsystems(const DecomposedModel& model, std::ostream& out);

}  // namespace dopf
