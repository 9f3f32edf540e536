#pragma once

#include <Eigen/Dense>
#include <map>
#include <tuple>
#include <utility>
#include <vector>

#include "dopf/feeder.hpp"
#include "dopf/linear_system.hpp"

namespace dopf {

/// Column order: generators, then squared voltages, then loads, then flows;
/// within each block by owner id, then phase (flows: from-to pair first).
std::vector<VariableKey> index_variables(const Feeder& f);

/// Column lookup over a variable table. Throws std::out_of_range for keys
/// that are not part of the table.
class VarIndex {
 public:
  explicit VarIndex(const std::vector<VariableKey>& table);

  int at(VarKind kind, const std::string& owner, int phase,
         FlowDirection direction = FlowDirection::from_to) const;
  int size() const { return static_cast<int>(index_.size()); }

 private:
  std::map<std::tuple<int, std::string, int, int>, int> index_;
};

/// One equality row; coefficients sorted by column, exact zeros dropped.
struct RowSpec {
  RowTag tag;
  std::vector<std::pair<int, double>> coeffs;
  double rhs = 0.0;
};

/// Two rows per (bus, phase): real and reactive power balance.
std::vector<RowSpec> build_power_balance(const Feeder& f, const VarIndex& vars);

/// Voltage-dependent demand rows plus the wye identities or delta coupling
/// rows linking bus withdrawal to load consumption.
std::vector<RowSpec> build_load_model(const Feeder& f, const VarIndex& vars);

/// Voltage-drop sensitivity matrices of a line, restricted to its phases.
/// Diagonals are -2r / -2x; off-diagonals carry the +-sqrt(3) pattern
/// determined by cyclic phase order.
void build_m_matrices(const LineSegment& line, Eigen::MatrixXd& mp, Eigen::MatrixXd& mq);

/// Per (line, phase): two loss rows and one voltage-drop row.
std::vector<RowSpec> build_flow_equations(const Feeder& f, const VarIndex& vars);

/// Stacks balance, load-model, and flow rows; cost 1.0 on each real
/// generation column; bounds from the component data (+-inf where the
/// model imposes none).
LinearSystem assemble_centralized(const Feeder& f);

}  // namespace dopf
