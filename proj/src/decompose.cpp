#include "dopf/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>

#include "dopf/parallel.hpp"

namespace dopf {

InfeasibleSubsystemError::InfeasibleSubsystemError(std::string subsystem_id)
    : std::runtime_error("infeasible subsystem '" + subsystem_id + "': contradictory rows"),
      subsystem_id_(std::move(subsystem_id)) {}

std::vector<Component> build_component_graph(const Feeder& f) {
  std::map<std::string, std::vector<std::string>> incident_lines;
  for (const LineSegment& line : f.lines) {
    incident_lines[line.from_bus].push_back(line.id);
    incident_lines[line.to_bus].push_back(line.id);
  }

  std::vector<Component> comps;
  std::set<std::string> claimed_lines;
  // Leaf buses merge with their single line; buses in id order, a line is
  // claimed at most once.
  for (const Bus& bus : f.buses) {
    const auto it = incident_lines.find(bus.id);
    if (it != incident_lines.end() && it->second.size() == 1 &&
        !claimed_lines.count(it->second.front())) {
      const std::string& line_id = it->second.front();
      claimed_lines.insert(line_id);
      comps.push_back({"leaf:" + bus.id + "+" + line_id,
                       ComponentKind::merged_leaf,
                       {{OwnerKind::bus, bus.id}, {OwnerKind::line, line_id}}});
    } else {
      comps.push_back({"bus:" + bus.id, ComponentKind::bus_node, {{OwnerKind::bus, bus.id}}});
    }
  }
  for (const LineSegment& line : f.lines)
    if (!claimed_lines.count(line.id))
      comps.push_back(
          {"line:" + line.id, ComponentKind::line_edge, {{OwnerKind::line, line.id}}});
  return comps;
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd> row_reduce(const Eigen::MatrixXd& a,
                                                       const Eigen::VectorXd& b,
                                                       double tol) {
  const int m = static_cast<int>(a.rows());
  const int n = static_cast<int>(a.cols());
  Eigen::MatrixXd work(m, n + 1);
  work.leftCols(n) = a;
  work.col(n) = b;

  // Forward elimination with unit pivots, choosing each pivot as the
  // largest |entry| of the remaining submatrix. That keeps normalized
  // entries and multipliers at most 1 in magnitude, so mixed-scale rows
  // (shunt coefficients next to unit flow coefficients) cannot blow up.
  int rank = 0;
  while (rank < m) {
    int pivot_row = -1, pivot_col = -1;
    double best = tol;
    for (int i = rank; i < m; ++i) {
      for (int j = 0; j < n; ++j) {
        if (std::abs(work(i, j)) > best) {
          best = std::abs(work(i, j));
          pivot_row = i;
          pivot_col = j;
        }
      }
    }
    if (pivot_row < 0) break;  // all remaining rows are zero within tol
    work.row(rank).swap(work.row(pivot_row));
    work.row(rank) /= work(rank, pivot_col);
    work(rank, pivot_col) = 1.0;
    for (int i = rank + 1; i < m; ++i) {
      const double factor = work(i, pivot_col);
      if (factor != 0.0) {
        work.row(i) -= factor * work.row(rank);
        work(i, pivot_col) = 0.0;
      }
    }
    ++rank;
  }
  for (int i = rank; i < m; ++i)
    for (int j = 0; j < n; ++j) work(i, j) = 0.0;

  for (int i = rank; i < m; ++i)
    if (std::abs(work(i, n)) > tol) throw InfeasibleSubsystemError("");

  Eigen::MatrixXd reduced = work.topLeftCorner(rank, n);
  for (int i = 0; i < rank; ++i)
    for (int j = 0; j < n; ++j)
      if (std::abs(reduced(i, j)) <= tol) reduced(i, j) = 0.0;
  return {std::move(reduced), work.col(n).head(rank)};
}

DecomposedModel partition(const LinearSystem& model, const std::vector<Component>& comps) {
  DecomposedModel out;
  out.global_cols = model.cols();
  out.c = model.c;
  out.x_lo = model.x_lo;
  out.x_hi = model.x_hi;
  out.var_table = model.var_table;

  std::map<std::pair<int, std::string>, int> comp_of_member;
  for (std::size_t s = 0; s < comps.size(); ++s)
    for (const MemberRef& member : comps[s].members)
      comp_of_member[{static_cast<int>(member.kind), member.id}] = static_cast<int>(s);

  const int S = static_cast<int>(comps.size());
  std::vector<std::vector<int>> rows_of(S);
  for (int row = 0; row < model.rows(); ++row) {
    const RowTag& tag = model.row_tags[row];
    auto it = comp_of_member.find({static_cast<int>(tag.owner_kind), tag.owner});
    if (it == comp_of_member.end())
      throw std::logic_error("row " + std::to_string(row) + " tagged to unknown component " +
                             to_string(tag));
    rows_of[it->second].push_back(row);
  }

  std::vector<std::set<int>> cols_of(S);
  for (int s = 0; s < S; ++s)
    for (int row : rows_of[s])
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.A, row); it; ++it)
        cols_of[s].insert(static_cast<int>(it.col()));

  // A column no row references still needs a home so that every global
  // variable keeps at least one copy; it goes to the component owning the
  // variable. Only squared-voltage columns can end up here.
  std::vector<bool> covered(model.cols(), false);
  for (int s = 0; s < S; ++s)
    for (int col : cols_of[s]) covered[col] = true;
  for (int col = 0; col < model.cols(); ++col) {
    if (covered[col]) continue;
    const VariableKey& key = model.var_table[col];
    if (key.kind != VarKind::w)
      throw std::logic_error("variable " + to_string(key) + " is referenced by no row");
    auto it = comp_of_member.find({static_cast<int>(OwnerKind::bus), key.owner});
    if (it == comp_of_member.end())
      throw std::logic_error("no component owns bus " + key.owner);
    cols_of[it->second].insert(col);
  }

  out.copy_counts.assign(model.cols(), 0);
  out.z_offsets.assign(1, 0);
  for (int s = 0; s < S; ++s) {
    Subsystem sub;
    sub.component_id = comps[s].id;
    sub.local_to_global.assign(cols_of[s].begin(), cols_of[s].end());
    const int ns = static_cast<int>(sub.local_to_global.size());
    const int ms = static_cast<int>(rows_of[s].size());
    std::map<int, int> local_of;
    for (int j = 0; j < ns; ++j) {
      local_of[sub.local_to_global[j]] = j;
      ++out.copy_counts[sub.local_to_global[j]];
    }
    sub.A = Eigen::MatrixXd::Zero(ms, ns);
    sub.b.resize(ms);
    for (int i = 0; i < ms; ++i) {
      const int row = rows_of[s][i];
      for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(model.A, row); it; ++it)
        sub.A(i, local_of.at(static_cast<int>(it.col()))) = it.value();
      sub.b[i] = model.b[row];
    }
    sub.rows_before_reduction = ms;
    out.z_offsets.push_back(out.z_offsets.back() + ns);
    out.subsystems.push_back(std::move(sub));
  }
  return out;
}

void reduce_subsystems(DecomposedModel& model, double tol, int workers) {
  const int S = model.subsystem_count();
  // Failures land in per-subsystem slots and are rethrown in index order
  // after the barrier, so the reported subsystem does not depend on
  // scheduling.
  std::vector<char> infeasible(S, 0);
  const auto reduce_one = [&](int s) {
    Subsystem& sub = model.subsystems[s];
    try {
      auto [a, b] = row_reduce(sub.A, sub.b, tol);
      sub.A = std::move(a);
      sub.b = std::move(b);
    } catch (const InfeasibleSubsystemError&) {
      infeasible[s] = 1;
    }
  };
  if (workers > 1) {
    WorkerPool pool(workers);
    pool.run(S, reduce_one);
  } else {
    for (int s = 0; s < S; ++s) reduce_one(s);
  }
  for (int s = 0; s < S; ++s)
    if (infeasible[s]) throw InfeasibleSubsystemError(model.subsystems[s].component_id);
}

DecomposedModel decompose(const LinearSystem& model, const Feeder& f, double tol, int workers) {
  DecomposedModel out = partition(model, build_component_graph(f));
  reduce_subsystems(out, tol, workers);
  return out;
}

void dump_subsystems(const DecomposedModel& model, std::ostream& out) {
  out << "subsystems " << model.subsystem_count() << "\n";
  for (int s = 0; s < model.subsystem_count(); ++s) {
    const Subsystem& sub = model.subsystems[s];
    out << s << " " << sub.component_id << " rows " << sub.row_count() << " (pre-reduction "
        << sub.rows_before_reduction << ", dropped "
        << sub.rows_before_reduction - sub.row_count() << ") cols " << sub.col_count() << "\n";
    out << "  globals:";
    for (int col : sub.local_to_global) out << " " << col;
    out << "\n";
  }
}

}  // namespace dopf
