#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <iosfwd>
#include <string>
#include <vector>

#include "dopf/feeder.hpp"

namespace dopf {

enum class VarKind {
  p_gen,
  q_gen,
  w,
  p_bus_load,  // power withdrawn from the bus by a load
  q_bus_load,
  p_load,      // power consumed by the load
  q_load,
  p_flow,
  q_flow,
};

enum class FlowDirection { from_to, to_from };

/// Identity of one column of the LP. `direction` is meaningful for flow
/// kinds only and fixed to from_to elsewhere.
struct VariableKey {
  VarKind kind = VarKind::w;
  std::string owner;  // generator, bus, load, or line id
  int phase = 1;
  FlowDirection direction = FlowDirection::from_to;

  bool operator==(const VariableKey&) const = default;
};

std::string to_string(const VariableKey& key);

enum class RowFamily {
  balance_p,
  balance_q,
  load_p,
  load_q,
  load_link,  // wye p^b=p^d identities or delta coupling rows
  loss_p,
  loss_q,
  drop,       // voltage magnitude drop along a line
};

enum class OwnerKind { bus, line };

/// Row provenance: the single feeder component a constraint belongs to.
struct RowTag {
  OwnerKind owner_kind = OwnerKind::bus;
  std::string owner;
  RowFamily family = RowFamily::balance_p;

  bool operator==(const RowTag&) const = default;
};

std::string to_string(const RowTag& tag);

/// The centralized LP: min c'x  s.t.  A x = b,  x_lo <= x <= x_hi.
struct LinearSystem {
  Eigen::SparseMatrix<double, Eigen::RowMajor> A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  Eigen::VectorXd x_lo, x_hi;  // +-inf allowed
  std::vector<VariableKey> var_table;
  std::vector<RowTag> row_tags;

  int rows() const { return static_cast<int>(A.rows()); }
  int cols() const { return static_cast<int>(A.cols()); }
};

/// Plain-text dump (sparse triplets plus the dense vectors) for external
/// cross-checks.
void dump_linear_system(const LinearSystem& ls, std::ostream& out);

}  // namespace dopf
